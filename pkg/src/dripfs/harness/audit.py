"""Obliviousness audit of a backend write trace.

The observable channel is the sequence of flush events: when they happen,
which backend files they replace and how many bytes move. A trace passes
when the cadence is exactly the drip time, every event writes k+1 distinct
files including the superblock with equal byte counts, and the data-pair
indices look uniform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from ..backend import TraceEvent, read_trace_csv
from ..errors import MalformedTrace


@dataclass
class AuditReport:
    events: int
    cadence_ok: bool
    volume_ok: bool
    superblock_ok: bool
    bytes_ok: bool
    uniformity_p: float
    notes: list = field(default_factory=list)

    def passed(self, alpha: float = 0.01) -> bool:
        return (self.cadence_ok and self.volume_ok and self.superblock_ok and self.bytes_ok
                and self.uniformity_p > alpha)

    def summary(self) -> str:
        flag = lambda ok: "ok" if ok else "FAIL"
        return (f"events={self.events} cadence={flag(self.cadence_ok)} volume={flag(self.volume_ok)} "
                f"superblock={flag(self.superblock_ok)} bytes={flag(self.bytes_ok)} "
                f"uniformity_p={self.uniformity_p:.4g}")


def index_counts(events, N: int) -> np.ndarray:
    counts = np.zeros(N - 1, dtype=np.int64)
    for ev in events:
        for i in ev.written_indices:
            if i != 0:
                counts[i - 1] += 1
    return counts


def uniformity_pvalue(events, N: int) -> float:
    """Chi-square goodness of fit of the data-pair indices against uniform
    over 1..N-1. Drawing without replacement inside an event only makes the
    statistic smaller, so the test stays conservative."""
    counts = index_counts(events, N)
    if counts.sum() == 0:
        return float("nan")
    return float(stats.chisquare(counts).pvalue)


def audit_trace(events, N: int, k: int, t: float, *, min_events: int = 100, tol: float = 1e-6) -> AuditReport:
    if isinstance(events, (str, bytes)) or hasattr(events, "__fspath__"):
        events = read_trace_csv(events)
    events = list(events)
    if len(events) < min_events:
        raise MalformedTrace(f"need at least {min_events} events, got {len(events)}")
    notes = []
    for ev in events:
        if any(not 0 <= i < N for i in ev.written_indices):
            raise MalformedTrace(f"epoch {ev.epoch_index}: index outside 0..{N - 1}")

    gaps = np.diff([ev.virtual_time_s for ev in events])
    cadence_ok = bool(np.all(np.abs(gaps - t) <= tol * max(1.0, t)))
    if not cadence_ok:
        notes.append(f"spacing range {gaps.min():.6g}..{gaps.max():.6g}, expected {t}")

    volume_ok = all(len(ev.written_indices) == k + 1 and len(set(ev.written_indices)) == k + 1 for ev in events)
    if not volume_ok:
        sizes = sorted({len(ev.written_indices) for ev in events})
        notes.append(f"write-set sizes {sizes}, expected {k + 1}")
    superblock_ok = all(0 in ev.written_indices for ev in events)
    bytes_ok = len({ev.total_bytes for ev in events}) == 1
    if not bytes_ok:
        notes.append("byte counts differ between events")
    p = uniformity_pvalue(events, N)
    if math.isnan(p):
        notes.append("no data-pair writes")
    return AuditReport(len(events), cadence_ok, volume_ok, superblock_ok, bytes_ok, p, notes)


def binned_counts(events, N: int, bins: int) -> np.ndarray:
    counts = index_counts(events, N)
    bins = min(bins, N - 1)
    edges = np.linspace(0, N - 1, bins + 1).astype(int)
    return np.add.reduceat(counts, edges[:-1])


def two_sample_pvalue(a, b, N: int, bins: int = 16) -> float:
    """Chi-square homogeneity test between the index distributions of two
    traces, with indices grouped into ``bins`` contiguous ranges so every
    cell has a useful expected count."""
    table = np.vstack([binned_counts(a, N, bins), binned_counts(b, N, bins)])
    table = table[:, table.sum(axis=0) > 0]
    if table.shape[1] < 2:
        return 1.0
    return float(stats.chi2_contingency(table, correction=False).pvalue)


def shape(events) -> list:
    """The per-event observables apart from which indices were chosen."""
    return [(ev.virtual_time_s, len(ev.written_indices), ev.total_bytes) for ev in events]


def rebase(events) -> list:
    """Shift virtual times so the first event is at zero."""
    if not events:
        return []
    t0 = events[0].virtual_time_s
    return [TraceEvent(e.epoch_index, e.virtual_time_s - t0, e.wall_time_s - t0, e.written_indices, e.total_bytes)
            for e in events]
