"""Cooperative multi-client simulation on one virtual clock: the RW client
ticks, the propagation layer copies flushed files to a replica, and
read-only watchers on both sides timestamp when each file appears."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..backend import init_backend
from ..clock import VirtualClock
from ..roclient import ROClient, Watcher
from ..rwclient import RWClient, SyncConfig
from .propagation import PropagationSim


@dataclass
class VisibilityRow:
    path: str
    inserted: float
    rw_visible: float
    ro_visible: float

    @property
    def lag(self) -> float:
        return self.ro_visible - self.rw_visible


@dataclass
class SimResult:
    t: float
    delay: object
    rows: list = field(default_factory=list)

    def summary(self) -> str:
        lags = [r.lag for r in self.rows]
        if not lags:
            return "no files became visible"
        return (f"files={len(lags)} t={self.t} delay={self.delay} lag min={min(lags):.2f} "
                f"max={max(lags):.2f} mean={sum(lags) / len(lags):.2f}")


def run_visibility_sim(*, N: int = 64, B: int = 65536, k: int = 3, t: float = 10.0, delay=5.0,
                       files: int = 20, size: int = 40_000, gap_epochs: int = 3, seed: int = 0,
                       key: bytes = b"\x05" * 32, poll: float = 0.0) -> SimResult:
    """Insert ``files`` files, one every ``gap_epochs`` ticks, and record for
    each the first poll at which the local mount and the replica mount can
    read it in full."""
    store = init_backend(None, N, B, key, k=k, t=t)
    clock = VirtualClock()
    rw = RWClient(store, SyncConfig(k, t, seed=seed))
    sim = PropagationSim(store, seed=seed)
    replica = sim.add_replica(delay)
    local = Watcher(ROClient(store.reader(), ttl=0, clock=clock), ["/*"])
    remote = Watcher(ROClient(replica, ttl=0, clock=clock), ["/*"])
    step = poll or t / 2
    inserted = {}
    res = SimResult(t, delay)
    rw.tick(clock.now())
    horizon = (files * gap_epochs + 200) * t
    n_inserted = 0
    tick_no = 0
    while clock.now() <= horizon:
        now = clock.now()
        if abs(now / t - round(now / t)) < 1e-9 and round(now / t) > tick_no:
            tick_no = round(now / t)
            if n_inserted < files and tick_no % gap_epochs == 1 % gap_epochs:
                path = f"/v{n_inserted:04d}"
                rw.put(path, bytes([n_inserted % 251 + 1]) * size, now=now)
                inserted[path] = now
                n_inserted += 1
            rw.tick(now)
        sim.propagate(now)
        local.poll(now)
        remote.poll(now)
        if n_inserted == files and len(remote.seen) == files and len(local.seen) == files:
            break
        clock.sleep_until(now + step)
    for path, at in inserted.items():
        if path in local.seen and path in remote.seen:
            res.rows.append(VisibilityRow(path, at, local.seen[path].time, remote.seen[path].time))
    rw.close()
    return res
