"""Command line interface.

Backends live in a directory; their parameters, key-derivation salt and
default seed sit in a key=value config file next to it (``<backend>.conf``)
unless ``--config`` names another. The passphrase comes from
``--passphrase`` or the DRIPFS_PASSPHRASE environment variable.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import os
import signal
import sys
import threading
import time
from pathlib import Path

from .. import codec
from ..backend import default_trace_path, init_backend, open_backend, read_trace_csv
from ..clock import VirtualClock, WallClock
from ..errors import BadParams, DripFSError
from ..roclient import ROClient, Watcher
from ..rwclient import RWClient, SyncConfig, close_on_tick, run_scheduler

log = logging.getLogger("dripfs")

DEFAULTS = {"B": "65536", "N": "256", "k": "3", "t": "10.0", "seed": "", "kdf": "scrypt"}


# --------------------------------------------------------------------------
# config


def read_config(path) -> dict:
    parser = configparser.ConfigParser()
    parser.optionxform = str
    parser.read_string("[dripfs]\n" + Path(path).read_text())
    return dict(parser["dripfs"])


def write_config(path, values: dict) -> None:
    with open(path, "w") as fh:
        for key, value in values.items():
            fh.write(f"{key}={value}\n")


def config_path(args) -> Path:
    if getattr(args, "config", None):
        return Path(args.config)
    if not getattr(args, "backend", None):
        args.backend = os.environ.get("DRIPFS_BACKEND")
    if not args.backend:
        raise BadParams("give --backend or --config (or set DRIPFS_BACKEND)")
    b = Path(args.backend)
    return b.with_name(b.name + ".conf")


def load(args) -> dict:
    cfg = dict(DEFAULTS)
    path = config_path(args)
    if path.exists():
        cfg.update(read_config(path))
    if getattr(args, "backend", None):
        cfg["backend_path"] = args.backend
    if "backend_path" not in cfg:
        raise BadParams(f"{path}: no backend_path")
    return cfg


def passphrase(args) -> str:
    value = getattr(args, "passphrase", None) or os.environ.get("DRIPFS_PASSPHRASE")
    if not value:
        raise BadParams("set DRIPFS_PASSPHRASE or pass --passphrase")
    return value


def key_for(cfg: dict, args) -> bytes:
    if cfg.get("kdf", "scrypt") != "scrypt":
        raise BadParams(f"unsupported kdf {cfg['kdf']}")
    return codec.derive_key(passphrase(args), bytes.fromhex(cfg["salt"]))


def _seed(cfg):
    return int(cfg["seed"]) if cfg.get("seed") not in (None, "") else None


# --------------------------------------------------------------------------
# commands


def cmd_init(args) -> int:
    cfg = dict(DEFAULTS)
    path = config_path(args)
    if path.exists():
        cfg.update(read_config(path))
    for name in ("B", "N", "k", "t", "seed"):
        if getattr(args, name) is not None:
            cfg[name] = str(getattr(args, name))
    cfg["backend_path"] = args.backend
    cfg.setdefault("salt", os.urandom(16).hex())
    key = key_for(cfg, args)
    init_backend(args.backend, int(cfg["N"]), int(cfg["B"]), key, k=int(cfg["k"]), t=float(cfg["t"]))
    write_config(path, cfg)
    print(f"initialized {args.backend}: N={cfg['N']} B={cfg['B']} k={cfg['k']} t={cfg['t']} (config {path})")
    return 0


def _mount_rw(cfg, args):
    store = open_backend(cfg["backend_path"], key_for(cfg, args))
    store.trace_path = default_trace_path(cfg["backend_path"])
    client = RWClient(store, SyncConfig(int(cfg["k"]), float(cfg["t"]), _seed(cfg)),
                      force_lock=getattr(args, "force", False))
    return store, client


def _settle(client: RWClient) -> None:
    """Run on virtual time until every change is on the backend, then
    unmount. Virtual time continues from the last flushed epoch."""
    clock = VirtualClock(client.epoch * client.config.t)
    try:
        run_scheduler(client, clock, until_idle=True)
        close_on_tick(client, clock)
    finally:
        if not client.closed:
            client.close()


def _rw_op(args, fn) -> int:
    cfg = load(args)
    _, client = _mount_rw(cfg, args)
    try:
        fn(client)
    except BaseException:
        client.close()
        raise
    _settle(client)
    return 0


def _ensure_parents(client: RWClient, path: str) -> None:
    parts = [p for p in path.split("/") if p][:-1]
    cur = ""
    for p in parts:
        cur += "/" + p
        try:
            client.resolve(cur)
        except DripFSError:
            client.mkdir(cur)


def cmd_put(args) -> int:
    data = sys.stdin.buffer.read() if args.src == "-" else Path(args.src).read_bytes()

    def op(client):
        _ensure_parents(client, args.dest)
        client.put(args.dest, data)

    return _rw_op(args, op)


def cmd_rm(args) -> int:
    return _rw_op(args, lambda c: c.delete(args.path))


def cmd_resize(args) -> int:
    return _rw_op(args, lambda c: c.resize(args.path, args.bytes))


def _ro(args) -> ROClient:
    cfg = load(args)
    return ROClient(open_backend(cfg["backend_path"], key_for(cfg, args), readonly=True), ttl=0)


def cmd_get(args) -> int:
    data = _ro(args).read(args.src)
    if args.dest == "-":
        sys.stdout.buffer.write(data)
    else:
        Path(args.dest).write_bytes(data)
    return 0


def cmd_ls(args) -> int:
    ro = _ro(args)
    for name in ro.listdir(args.path):
        full = args.path.rstrip("/") + "/" + name
        try:
            e = ro.stat(full)
            kind = "d" if e.is_directory else "-"
            print(f"{kind} {e.size:>12} {name}")
        except DripFSError:
            print(f"? {'':>12} {name}  (not yet synced)")
    return 0


def cmd_daemon(args) -> int:
    """Wall-clock RW mount. Files dropped into ``--inbox`` are stored under
    the frontend root and removed from the inbox."""
    cfg = load(args)
    store, client = _mount_rw(cfg, args)
    stop = threading.Event()
    signal.signal(signal.SIGINT, lambda *_: stop.set())
    signal.signal(signal.SIGTERM, lambda *_: stop.set())
    clock = WallClock(stop, start=client.epoch * client.config.t)
    inbox = Path(args.inbox) if args.inbox else None
    deadline = clock.now() + args.duration if args.duration else None

    def on_tick(c, rep):
        if rep.overrun:
            log.warning("EPOCH_OVERRUN at epoch %d", rep.epoch)
        if inbox is not None:
            for f in sorted(inbox.iterdir()):
                if f.is_file():
                    c.put("/" + f.name, f.read_bytes())
                    f.unlink()
                    log.info("queued %s", f.name)
        if stop.is_set() or (deadline is not None and clock.now() >= deadline):
            raise _Stop

    try:
        run_scheduler(client, clock, epochs=10**12, on_tick=on_tick, start=client.epoch * client.config.t)
    except _Stop:
        pass
    finally:
        if store.has_staged:
            # keep the cadence: the last epoch goes out on its own tick
            last = client.reports[-1].time if client.reports else clock.now()
            time.sleep(max(0.0, last + client.config.t - clock.now()))
            client.flush(last + client.config.t, clock.wall())
        client.close()
    print(f"daemon stopped at epoch {client.epoch}")
    return 0


class _Stop(Exception):
    pass


def cmd_mirror(args) -> int:
    ro = _ro(args)
    clock = WallClock()
    ro.clock = clock
    watcher = Watcher(ro, args.watch)
    interval = args.interval or ro.superblock().t / 2
    end = clock.now() + args.duration if args.duration else None
    new = not Path(args.events_out).exists()
    with open(args.events_out, "a") as fh:
        if new:
            fh.write("path,first_visible_epoch,time_s,size\n")
        while end is None or clock.now() < end:
            for ev in watcher.poll(clock.wall()):
                fh.write(f"{ev.path},{ev.epoch},{ev.time:.3f},{ev.size}\n")
                fh.flush()
                print(f"{ev.path} visible at epoch {ev.epoch}")
            clock.sleep_until(clock.now() + interval)
    return 0


def cmd_sim(args) -> int:
    from .sim import run_visibility_sim

    delay = tuple(float(x) for x in args.delay.split(",")) if "," in args.delay else float(args.delay)
    res = run_visibility_sim(N=args.N, B=args.B, k=args.k, t=args.t, delay=delay, files=args.files,
                             seed=args.seed)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write("path,inserted_s,rw_visible_s,ro_visible_s,lag_s\n")
            for r in res.rows:
                fh.write(f"{r.path},{r.inserted},{r.rw_visible},{r.ro_visible},{r.lag}\n")
    print(res.summary())
    return 0


def cmd_audit(args) -> int:
    from .audit import audit_trace

    N, k, t = args.N, args.k, args.t
    if None in (N, k, t) and (args.config or args.backend or os.environ.get("DRIPFS_BACKEND")):
        cfg = load(args)
        N, k, t = int(cfg["N"]), int(cfg["k"]), float(cfg["t"])
    if None in (N, k, t):
        raise BadParams("give --config/--backend or all of --N --k --t")
    report = audit_trace(read_trace_csv(args.trace), N, k, t, min_events=args.min_events)
    print(report.summary())
    for note in report.notes:
        print("  " + note)
    ok = report.passed(args.alpha)
    print("PASS" if ok else "FAIL")
    return 0 if ok else 1


def cmd_bench(args) -> int:
    from . import bench
    from .theorem import tail_ok, validate_theorem1

    p = bench.BenchParams(args.N, args.B, args.k, args.t, args.seed)
    if args.kind == "throughput":
        res = bench.bench_throughput(p, bench.fixed_workload(p, args.fill))
        rows = res.rows
    elif args.kind == "latency":
        res = bench.bench_latency(p, max_fill=args.fill)
        rows = res.rows
    elif args.kind == "buffer":
        res = bench.bench_buffer(p, args.fill, epochs=args.epochs)
        rows = res.rows
    else:
        res = validate_theorem1(args.B, args.N, args.k, args.fill, args.trials, seed=args.seed)
        rows = [{"trial": i, "s_bytes": int(s), "syncs": int(n)} for i, (s, n) in
                enumerate(zip(res.s_values, res.syncs))]
        print("tail ok: " + " ".join(f"r={r}:{tail_ok(res, r)}" for r in res.tail_r))
    if args.out:
        bench.write_rows(args.out, rows)
    print(res.summary())
    return 0


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dripfs", description="write-only oblivious file sync")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    def common(p, backend_required=False):
        p.add_argument("--backend", required=backend_required, help="backend directory")
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--passphrase")
        return p

    p = common(sub.add_parser("init", help="create a backend"), True)
    p.add_argument("--N", type=int)
    p.add_argument("--B", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--t", type=float)
    p.add_argument("--seed", type=int)
    p.set_defaults(fn=cmd_init)

    p = common(sub.add_parser("put", help="store a local file"))
    p.add_argument("src")
    p.add_argument("dest")
    p.add_argument("--force", action="store_true", help="break a stale rw.lock")
    p.set_defaults(fn=cmd_put)

    p = common(sub.add_parser("get", help="read a file"))
    p.add_argument("src")
    p.add_argument("dest")
    p.set_defaults(fn=cmd_get)

    p = common(sub.add_parser("ls", help="list a directory"))
    p.add_argument("path", nargs="?", default="/")
    p.set_defaults(fn=cmd_ls)

    p = common(sub.add_parser("rm", help="delete a file"))
    p.add_argument("path")
    p.add_argument("--force", action="store_true")
    p.set_defaults(fn=cmd_rm)

    p = common(sub.add_parser("resize", help="truncate or extend a file"))
    p.add_argument("path")
    p.add_argument("bytes", type=int)
    p.add_argument("--force", action="store_true")
    p.set_defaults(fn=cmd_resize)

    p = common(sub.add_parser("daemon", help="wall-clock read/write mount"))
    p.add_argument("--inbox", help="directory polled for files to store")
    p.add_argument("--duration", type=float, help="stop after this many seconds")
    p.add_argument("--force", action="store_true")
    p.set_defaults(fn=cmd_daemon)

    p = common(sub.add_parser("mirror", help="read-only watcher"))
    p.add_argument("--watch", action="append", default=[], required=True, help="glob, may repeat")
    p.add_argument("--events-out", required=True)
    p.add_argument("--interval", type=float)
    p.add_argument("--duration", type=float)
    p.set_defaults(fn=cmd_mirror)

    p = sub.add_parser("sim", help="simulated RW + cloud propagation + RO run")
    p.add_argument("--N", type=int, default=64)
    p.add_argument("--B", type=int, default=65536)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--t", type=float, default=10.0)
    p.add_argument("--delay", default="5", help="seconds, or lo,hi for uniform")
    p.add_argument("--files", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_sim)

    p = common(sub.add_parser("audit", help="check a backend trace"))
    p.add_argument("trace")
    p.add_argument("--N", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--t", type=float)
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--min-events", type=int, default=100)
    p.set_defaults(fn=cmd_audit)

    p = sub.add_parser("bench", help="desk-scale experiments")
    p.add_argument("kind", choices=["throughput", "latency", "buffer", "theorem1"])
    p.add_argument("--N", type=int, default=256)
    p.add_argument("--B", type=int, default=65536)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--t", type=float, default=10.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fill", type=float, default=0.9,
                   help="target fill (throughput, latency, buffer) or load fraction (theorem1)")
    p.add_argument("--epochs", type=int, default=400)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--out", help="CSV output")
    p.set_defaults(fn=cmd_bench)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except DripFSError as exc:
        print(f"error {exc.code}: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
