"""Crash injection: kill the writer at a random point of the sync cycle,
remount, and check what readers see."""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from ..backend import init_backend
from ..errors import NotFound, PartialFlush, Unavailable
from ..roclient import ROClient
from ..rwclient import RWClient, SyncConfig

# the three in-memory update boundaries, plus a crash part-way through the flush
STAGES = ("data_written", "buffer_removed", "table_updated", "flush")


class SimulatedCrash(Exception):
    pass


@dataclass
class CrashOutcome:
    stage: str
    epoch: int
    published: int = 0
    dangling: int = 0
    problems: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.problems


def _random_op(rng, rw, history, cap, now):
    paths = sorted(p for p in history if history[p][-1] is not None)
    r = rng.random()
    if not paths or r < 0.3:
        path = f"/f{rng.randrange(12)}"
        data = bytes([rng.randrange(1, 256)]) * rng.randrange(1, 3 * cap)
        rw.put(path, data, now=now)
    elif r < 0.8:
        path = rng.choice(paths)
        size = len(history[path][-1])
        off = cap * rng.randrange(0, size // cap + 1)
        rw.write(path, off, bytes([rng.randrange(1, 256)]) * rng.randrange(1, 2 * cap), now=now)
    else:
        path = rng.choice(paths)
        rw.delete(path, now=now)
        history[path].append(None)
        return
    history.setdefault(path, [b""]).append(rw.read(path))


def crash_trial(seed: int, *, N: int = 16, B: int = 4096, k: int = 3, key: bytes = b"\x09" * 32,
                stage: str | None = None) -> CrashOutcome:
    """Random workload, one injected crash, remount and check."""
    rng = random.Random(seed)
    store = init_backend(None, N, B, key, k=k, t=10.0)
    rw = RWClient(store, SyncConfig(k, 10.0, seed=seed))
    cap = rw.layout.data_capacity
    history: dict = {}
    stage = stage or rng.choice(STAGES)
    crash_epoch = rng.randrange(3, 40)
    now = 0.0
    rw.tick(now)
    for e in range(1, crash_epoch + 1):
        for _ in range(rng.randrange(0, 3)):
            _random_op(rng, rw, history, cap, now + rng.random())
        now += 10.0
        if e < crash_epoch:
            rw.tick(now)
            continue
        try:
            if stage == "flush":
                rw.tick(now, crash_after=rng.randrange(0, k + 1))
            else:
                def boom(at, stage=stage):
                    if at == stage:
                        raise SimulatedCrash(at)
                rw.fault = boom
                rw.tick(now)
        except (SimulatedCrash, PartialFlush):
            pass
    # the process is gone: drop its memory and anything it had staged
    store.discard_staged()
    out = CrashOutcome(stage, crash_epoch)
    try:
        ro = ROClient(store.reader())
        paths = ro.walk("/")
        again = RWClient(store, SyncConfig(k, 10.0, seed=seed + 1), force_lock=True)
    except (NotFound, Unavailable) as exc:
        out.problems.append(f"remount failed: {exc}")
        return out
    for path in paths:
        try:
            data = ro.read(path)
        except Unavailable:
            # name published ahead of the file itself
            out.dangling += 1
            continue
        out.published += 1
        if data not in history.get(path, []):
            out.problems.append(f"{path}: {len(data)} bytes match no written version")
        try:
            if again.read(path) != data:
                out.problems.append(f"{path}: remounted writer disagrees with reader")
        except (NotFound, Unavailable) as exc:
            out.problems.append(f"{path}: remounted writer cannot read it ({exc})")
    again.close()
    return out


def crash_campaign(trials: int = 100, seed: int = 0) -> list:
    """Crash points cycle through every stage."""
    return [crash_trial(seed * 100_003 + i, stage=STAGES[i % len(STAGES)]) for i in range(trials)]
