"""Monte Carlo check of the sync-count bound.

With m bytes of live data already in the backend and s bytes buffered, and
m + s <= NB/4, the number of syncs needed to empty the buffer should have
mean at most 4s/(Bk), and exceed 48s/(Bk) + 18r with probability at most
exp(-r).
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

import numpy as np

from .. import codec
from ..backend import init_backend
from ..clock import VirtualClock
from ..rwclient import RWClient, SyncConfig
from .workloads import prefill


@dataclass
class Theorem1Result:
    B: int
    N: int
    k: int
    m: int
    s_mean: float
    syncs: np.ndarray
    s_values: np.ndarray
    tail_r: tuple = (1, 2, 3)
    tail_rates: dict = field(default_factory=dict)

    @property
    def mean_syncs(self) -> float:
        return float(self.syncs.mean())

    @property
    def bound(self) -> float:
        """4s/(Bk), averaged over trials (s varies a little per trial)."""
        return float(np.mean(4 * self.s_values / (self.B * self.k)))

    @property
    def in_bound_regime(self) -> bool:
        return self.m + self.s_values.max() <= self.N * self.B / 4

    def tail_threshold(self, s: float, r: float) -> float:
        return 48 * s / (self.B * self.k) + 18 * r

    def summary(self) -> str:
        tails = " ".join(f"r={r}:{rate:.4f}<=e^-{r}" for r, rate in self.tail_rates.items())
        return (f"B={self.B} N={self.N} k={self.k} m={self.m} s~{self.s_mean:.0f} trials={len(self.syncs)} "
                f"mean_syncs={self.mean_syncs:.3f} bound={self.bound:.3f} max={int(self.syncs.max())} {tails}")


def mixed_sizes(rng: random.Random, total: int, cap: int) -> list:
    """File sizes uniform on [1, 3 * cap] bytes, trimmed to ``total``."""
    out = []
    while total > 0:
        s = min(total, rng.randint(1, 3 * cap))
        out.append(s)
        total -= s
    return out


def fill_buffer(client: RWClient, rng: random.Random, s: int, prefix: str, now: float = 0.0) -> None:
    """Buffer new files of mixed sizes until the buffer holds close to,
    but not more than, ``s`` bytes. Directory fragments count towards s."""
    cap = client.layout.data_capacity
    j = 0
    while True:
        # room for the new name in the directory's last fragment
        room = s - client.buffer.nbytes - (client.working[0].size % cap) - len(prefix) - 16
        if room <= 0:
            return
        size = min(room, rng.randint(1, 3 * cap))
        client.put(f"{prefix}{j}", bytes([j % 251 + 1]) * size, now=now)
        j += 1


def syncs_to_clear(client: RWClient, clock, max_syncs: int = 100_000) -> int:
    n = 0
    while len(client.buffer):
        if n >= max_syncs:
            raise RuntimeError("buffer did not clear")
        clock.advance(client.config.t)
        client.tick(clock.now())
        n += 1
    return n


def validate_theorem1(B: int, N: int, k: int, load_fraction: float, trials: int, *, s: int = 0,
                      seed: int = 0, layouts: int = 10, key: bytes = b"\x01" * 32) -> Theorem1Result:
    """``load_fraction`` is (m + s) / (N B); the bound's regime is <= 1/4.
    ``s`` defaults to kB, one epoch's worth of writes. Trials are split over
    ``layouts`` independently prefilled backends."""
    layout = codec.Layout(B)
    cap = layout.data_capacity
    s = s or k * B
    m_target = max(0, int(load_fraction * N * B) - s)
    rng = random.Random(seed)
    syncs, svals = [], []
    m_actual = 0
    per_layout = [trials // layouts + (i < trials % layouts) for i in range(layouts)]
    for li, count in enumerate(per_layout):
        if not count:
            continue
        store = init_backend(None, N, B, key, k=k)
        client = RWClient(store, SyncConfig(k, 10.0, seed=rng.randrange(2**32)))
        clock = VirtualClock()
        if m_target:
            prefill(client, clock, mixed_sizes(rng, m_target, cap), seed=rng.randrange(2**32))
        # superblock and metadata are not part of m
        m_actual = max(m_actual, sum(e.size for f, e in client.working.items() if not e.is_directory))
        base = client.fork()
        for trial in range(count):
            c = base.fork()
            c.rng = random.Random(rng.randrange(2**63))
            clk = VirtualClock(clock.now())
            fill_buffer(c, rng, s, f"/s{li}_{trial}_", clk.now())
            svals.append(c.buffer.nbytes)
            syncs.append(syncs_to_clear(c, clk))
        client.close()
    res = Theorem1Result(B, N, k, m_actual, float(np.mean(svals)), np.array(syncs), np.array(svals, dtype=float))
    for r in res.tail_r:
        exceed = [n > res.tail_threshold(sv, r) for n, sv in zip(syncs, svals)]
        res.tail_rates[r] = float(np.mean(exceed))
    return res


def tail_ok(res: Theorem1Result, r: int) -> bool:
    return res.tail_rates[r] <= math.exp(-r)
