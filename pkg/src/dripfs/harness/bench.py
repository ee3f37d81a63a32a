"""Desk-scale benchmarks: throughput, latency and buffer growth.

Every run uses an in-memory backend and a virtual clock. Per-epoch rows
carry the trace columns of the flush that happened at that tick, plus the
benchmark's own metrics.
"""

from __future__ import annotations

import csv
import random
from dataclasses import dataclass, field

import numpy as np

from .. import codec
from ..backend import TRACE_FIELDS, init_backend
from ..clock import VirtualClock
from ..rwclient import RWClient, SyncConfig
from .workloads import fill_bytes, lognormal_sizes, pair_sized, prefill

DEFAULT_KEY = b"\x07" * 32


@dataclass
class BenchParams:
    N: int = 256
    B: int = 65536
    k: int = 3
    t: float = 10.0
    seed: int = 0


def _mount(p: BenchParams, key: bytes = DEFAULT_KEY):
    store = init_backend(None, p.N, p.B, key, k=p.k, t=p.t)
    client = RWClient(store, SyncConfig(p.k, p.t, seed=p.seed))
    return store, client, VirtualClock()


def _trace_cols(ev) -> dict:
    if ev is None:
        return {f: "" for f in TRACE_FIELDS}
    return dict(zip(TRACE_FIELDS, ev.row()))


def _done(client: RWClient, fid: int) -> bool:
    return fid not in client.shadow and not client.buffer.has_file(fid)


# --------------------------------------------------------------------------
# throughput


@dataclass
class ThroughputResult:
    params: BenchParams
    sizes: list
    rows: list = field(default_factory=list)
    done_epoch: list = field(default_factory=list)  # per file, syncs until published

    @property
    def payload(self) -> int:
        return int(sum(self.sizes))

    def epochs_to_fraction(self, frac: float) -> int:
        """Syncs until ``frac`` of the payload bytes are published."""
        order = np.argsort(self.done_epoch, kind="stable")
        cum = np.cumsum(np.asarray(self.sizes)[order])
        idx = int(np.searchsorted(cum, frac * self.payload - 1e-9))
        return int(np.asarray(self.done_epoch)[order][idx])

    @property
    def epochs_total(self) -> int:
        return int(max(self.done_epoch)) if self.done_epoch else 0

    def backend_bytes(self, epochs: int) -> int:
        """Bytes written to the backend by ``epochs`` syncs."""
        envelope = self.params.B + codec.ENVELOPE_OVERHEAD
        return epochs * (self.params.k + 1) * envelope

    def summary(self) -> str:
        q = self.epochs_to_fraction(0.25)
        return (f"throughput N={self.params.N} B={self.params.B} k={self.params.k} files={len(self.sizes)} "
                f"payload={self.payload} epochs25={q} epochs100={self.epochs_total} "
                f"written25/payload25={self.backend_bytes(q) / (0.25 * self.payload):.2f}")


def bench_throughput(params: BenchParams, sizes, *, max_epochs: int = 100_000) -> ThroughputResult:
    """Insert every file at once, then count syncs until each is published."""
    store, client, clock = _mount(params)
    fids = [client.put(f"/f{i:06d}", bytes([i % 251 + 1]) * int(s)) for i, s in enumerate(sizes)]
    res = ThroughputResult(params, list(sizes), done_epoch=[0] * len(fids))
    pending = set(range(len(fids)))
    completed_bytes = 0
    client.tick(clock.now())
    epoch = 0
    while pending and epoch < max_epochs:
        epoch += 1
        for i in [i for i in pending if _done(client, fids[i])]:
            pending.discard(i)
            res.done_epoch[i] = epoch
            completed_bytes += sizes[i]
        clock.advance(params.t)
        last = len(store.trace)
        client.tick(clock.now())
        row = _trace_cols(store.trace[last] if len(store.trace) > last else None)
        row.update(sync=epoch, files_done=len(fids) - len(pending), bytes_done=completed_bytes,
                   fraction=completed_bytes / max(1, res.payload), buffer_bytes=client.buffer.nbytes)
        res.rows.append(row)
    client.close()
    return res


def fixed_workload(params: BenchParams, fraction: float) -> list:
    layout = codec.Layout(params.B)
    n = int(round(fraction * (params.N - 1)))
    return [pair_sized(layout)] * n


def lognormal_workload(params: BenchParams, total: int, seed: int, *, outlier_fraction: float = 0.14) -> list:
    """Heavy-tailed file sizes of the given total, with one outlier of
    ``outlier_fraction`` of the backend's data capacity."""
    layout = codec.Layout(params.B)
    capacity = (params.N - 1) * pair_sized(layout)
    outlier = min(total, int(outlier_fraction * capacity))
    return lognormal_sizes(np.random.default_rng(seed), total, outlier=outlier, max_size=capacity // 8)


def bench_size_independence(params: BenchParams, fraction: float, seeds) -> list:
    """Epochs to publish a fixed-size set and a lognormal set of equal bytes,
    per seed. Returns (seed, fixed_epochs, lognormal_epochs) rows."""
    out = []
    for seed in seeds:
        p = BenchParams(params.N, params.B, params.k, params.t, seed)
        fixed = fixed_workload(p, fraction)
        logn = lognormal_workload(p, sum(fixed), seed)
        out.append((seed, bench_throughput(p, fixed).epochs_total, bench_throughput(p, logn).epochs_total))
    return out


# --------------------------------------------------------------------------
# latency


@dataclass
class LatencyResult:
    params: BenchParams
    rows: list = field(default_factory=list)  # fill, epochs

    def median_between(self, lo: float, hi: float) -> float:
        vals = [r["epochs"] for r in self.rows if lo <= r["fill"] < hi]
        return float(np.median(vals)) if vals else float("nan")

    def summary(self) -> str:
        return (f"latency k={self.params.k} files={len(self.rows)} median(<1/3)={self.median_between(0, 1 / 3)} "
                f"median(0.80-0.90)={self.median_between(0.80, 0.90)}")


def bench_latency(params: BenchParams, *, max_fill: float = 0.9, file_size: int = 0) -> LatencyResult:
    """Insert one file at a time; each is measured from insertion to the
    sync that publishes it together with its directory entry."""
    store, client, clock = _mount(params)
    size = file_size or pair_sized(client.layout)
    n = int(max_fill * (params.N - 1) * pair_sized(client.layout) / size)
    res = LatencyResult(params)
    capacity = (params.N - 1) * pair_sized(client.layout)
    stored = 0
    client.tick(clock.now())
    for i in range(n):
        fid = client.put(f"/l{i:06d}", bytes([i % 251 + 1]) * size, now=clock.now())
        epochs = 0
        while not (_done(client, fid) and _done(client, codec.ROOT_FILE_ID)):
            clock.advance(params.t)
            last = len(store.trace)
            client.tick(clock.now())
            epochs += 1
        res.rows.append(dict(_trace_cols(store.trace[last] if len(store.trace) > last else None),
                             file=i, fill=stored / capacity, epochs=epochs))
        stored += size
    client.close()
    return res


# --------------------------------------------------------------------------
# buffer under a rewrite-heavy workload


@dataclass
class BufferResult:
    params: BenchParams
    fill: float
    rows: list = field(default_factory=list)

    @property
    def cap(self) -> int:
        return codec.Layout(self.params.B).data_capacity

    @property
    def max_blocks(self) -> float:
        return max(r["buffer_peak"] for r in self.rows) / self.cap

    def summary(self) -> str:
        return (f"buffer k={self.params.k} fill={self.fill:.2f} epochs={len(self.rows)} "
                f"max={self.max_blocks:.2f} block capacities")


def bench_buffer(params: BenchParams, fill: float, *, epochs: int = 400, batch_mean: float = 0.0) -> BufferResult:
    """Thrash model: every epoch writes a batch whose byte total is
    exponential with mean ``batch_mean`` (default B/4). Batches rewrite
    prefixes of existing files, picked with probability inversely
    proportional to file size, so small files are rewritten most often."""
    store, client, clock = _mount(params)
    cap = client.layout.data_capacity
    np_rng = np.random.default_rng(params.seed)
    rng = random.Random(params.seed)
    sizes = lognormal_sizes(np_rng, fill_bytes(client.layout, params.N, fill), max_size=4 * cap) if fill else []
    paths = prefill(client, clock, sizes, seed=params.seed)
    weights = np.array([1.0 / s for s in sizes]) if sizes else np.array([])
    if len(weights):
        weights /= weights.sum()
    mean = batch_mean or params.B / 4
    res = BufferResult(params, fill)
    for e in range(epochs):
        budget = int(np_rng.exponential(mean))
        while budget > 0 and paths:
            i = int(np_rng.choice(len(paths), p=weights))
            n = min(budget, sizes[i])
            client.write(paths[i], 0, bytes([rng.randrange(256)]) * n, now=clock.now())
            budget -= n
        peak = client.buffer.nbytes
        clock.advance(params.t)
        last = len(store.trace)
        client.tick(clock.now())
        res.rows.append(dict(_trace_cols(store.trace[last] if len(store.trace) > last else None),
                             epoch=e, buffer_peak=peak, buffer_after=client.buffer.nbytes))
    client.close()
    return res


def write_rows(path, rows) -> None:
    if not rows:
        return
    keys = list(rows[0])
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        w.writerows(rows)
