"""Workload generators and scripted operation sequences."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..codec import EMPTY
from ..errors import BadParams
from ..rwclient import RWClient, SyncConfig, run_scheduler


@dataclass(frozen=True)
class Op:
    """One timestamped non-read operation. ``offset`` is in fragments."""

    time: float
    kind: str  # create | write | resize | delete
    path: str
    offset: int = 0
    length: int = 0
    fill: int = 0

    def apply(self, client: RWClient, cap: int) -> None:
        if self.kind == "create":
            client.create(self.path, now=self.time)
        elif self.kind == "write":
            client.write(self.path, self.offset * cap, bytes([self.fill]) * self.length, now=self.time)
        elif self.kind == "resize":
            client.resize(self.path, self.length, now=self.time)
        elif self.kind == "delete":
            client.delete(self.path, now=self.time)
        else:
            raise BadParams(f"unknown op {self.kind}")


@dataclass
class FsequenceScript:
    ops: list = field(default_factory=list)
    name: str = ""

    @property
    def L(self) -> int:
        """Bytes of file data the script modifies."""
        return sum(op.length for op in self.ops if op.kind == "write")

    @property
    def last_time(self) -> float:
        return max((op.time for op in self.ops), default=0.0)


def example_fsequences() -> list:
    """Three sequences with the same (L, t) = (20, 5) budget, run against
    two pre-existing files /file1 and /file2."""
    return [
        FsequenceScript([], "idle"),
        FsequenceScript([Op(3, "write", "/file1", 1, 5, 1), Op(3, "write", "/file2", 3, 3, 2),
                         Op(5, "write", "/file1", 6, 9, 3)], "three-writes"),
        FsequenceScript([Op(5, "write", "/file2", 1, 20, 4)], "one-write"),
    ]


def random_fsequence(rng: random.Random, L: int, t: float, files=("/file1", "/file2"),
                     max_offset: int = 8, name: str = "") -> FsequenceScript:
    """Random writes totalling at most L bytes, all at times <= t."""
    ops = []
    budget = L
    while budget > 0 and rng.random() < 0.85:
        n = rng.randint(1, budget)
        ops.append(Op(round(rng.uniform(0, t), 3), "write", rng.choice(files), rng.randrange(max_offset),
                      n, rng.randrange(256)))
        budget -= n
    ops.sort(key=lambda o: o.time)
    return FsequenceScript(ops, name)


def run_script(client: RWClient, clock, script: FsequenceScript, epochs: int) -> list:
    """Apply ``script`` on the virtual clock while the scheduler ticks."""
    cap = client.layout.data_capacity
    pending = sorted(script.ops, key=lambda o: o.time)
    start = clock.now()
    reports = []
    if not client.store.has_staged:
        reports.append(client.tick(start, clock.wall()))
    t = client.config.t
    for i in range(1, epochs + 1):
        tick_at = start + i * t
        while pending and start + pending[0].time <= tick_at:
            op = pending.pop(0)
            clock.sleep_until(start + op.time)
            op.apply(client, cap)
        clock.sleep_until(tick_at)
        reports.append(client.tick(clock.now(), clock.wall()))
    return reports


def pair_sized(layout) -> int:
    """Payload bytes of a file that fills both blocks of one pair."""
    return 2 * layout.data_capacity


def lognormal_sizes(rng: np.random.Generator, total: int, *, median: float = 4096.0, sigma: float = 2.0,
                    outlier: int = 0, max_size: Optional[int] = None) -> list:
    """File sizes from a heavy-tailed lognormal model summing to exactly
    ``total`` bytes, with an optional single large file first."""
    sizes = []
    remaining = total
    if outlier:
        if outlier > total:
            raise BadParams("outlier larger than the total")
        sizes.append(int(outlier))
        remaining -= int(outlier)
    mu = math.log(median)
    while remaining > 0:
        s = max(1, int(rng.lognormal(mu, sigma)))
        if max_size is not None:
            s = min(s, max_size)
        s = min(s, remaining)
        sizes.append(s)
        remaining -= s
    return sizes


def fill_bytes(layout, N: int, fraction: float) -> int:
    """Payload bytes that occupy ``fraction`` of the data pairs."""
    return int(fraction * (N - 1) * pair_sized(layout))


class PrefillSelector:
    """Setup-only pair chooser that steers the engine towards pairs with
    free blocks, so benchmarks can reach a target fill quickly. It tracks
    free blocks from the engine's own placements."""

    def __init__(self, N: int):
        self.free = {p: 2 for p in range(1, N)}

    def __call__(self, rng, N, k):
        open_pairs = [p for p, n in self.free.items() if n > 0]
        if len(open_pairs) >= k:
            return rng.sample(open_pairs, k)
        rest = [p for p in range(1, N) if p not in open_pairs]
        return open_pairs + rng.sample(rest, k - len(open_pairs))

    def update(self, report) -> None:
        for p, n in report.pair_free.items():
            self.free[p] = n


def prefill(client: RWClient, clock, sizes, *, k_fill: int = 32, prefix: str = "/pre", seed: int = 0) -> list:
    """Load files through the engine with a space-steered selector and a
    large drip rate, then restore the client's own selector and rate.
    Measurements must start after this returns."""
    saved = client.selector, client.config, client.rng, client._template
    sel = PrefillSelector(client.store.N)
    sel.free.update(free_blocks(client))
    client.selector = sel
    client.config = SyncConfig(min(k_fill, client.store.N - 1), saved[1].t, saved[1].seed)
    # its own stream, so measured epochs do not replay the prefill's choices
    client.rng = random.Random(f"prefill-{seed}")
    paths = []
    for i, size in enumerate(sizes):
        path = f"{prefix}{i:05d}"
        client.put(path, bytes([i % 251 + 1]) * int(size), now=clock.now())
        paths.append(path)
    run_scheduler(client, clock, until_idle=True, on_tick=lambda c, r: sel.update(r))
    client.selector, client.config, client.rng, client._template = saved
    return paths


def free_blocks(client: RWClient) -> dict:
    """Empty blocks per pair, from one scan of the backend."""
    return {p: sum(b == EMPTY for b in client._pair_blocks(p)) for p in range(1, client.store.N)}
