"""Stand-in for a cloud sync tool: copies each flushed backend file to
replica stores after a delay.

Replicas only ever hold whole, previously flushed files. Within one
replica, nothing from a flush lands before everything from the flush
before it, and a flush's superblock lands after that flush's data files.
"""

from __future__ import annotations

import heapq
import itertools
import random
from dataclasses import dataclass, field
from typing import Optional

from ..backend import BackendStore, MemoryBackend


@dataclass
class Replica:
    store: BackendStore
    delay: object  # float seconds, or (lo, hi) for uniform delays
    rng: random.Random
    queue: list = field(default_factory=list)
    floor: float = float("-inf")
    delivered: int = 0

    def sample(self) -> float:
        if isinstance(self.delay, tuple):
            return self.rng.uniform(*self.delay)
        return float(self.delay)


class PropagationSim:
    def __init__(self, source: BackendStore, seed: int = 0):
        self.source = source
        self.replicas: list = []
        self._seed = seed
        self._seq = itertools.count()
        self.now = float("-inf")
        source.listeners.append(self._on_flush)

    def add_replica(self, delay=0.0, store: Optional[BackendStore] = None) -> BackendStore:
        """Attach a replica. Without ``store`` an in-memory copy of the
        source's current files is made."""
        if store is None:
            files = {i: self.source.read_raw(i) for i in range(self.source.N)}
            self.source.read_count -= self.source.N
            store = MemoryBackend(self.source.N, self.source.B, self.source.key, readonly=True, files=files)
        self.replicas.append(Replica(store, delay, random.Random(self._seed + len(self.replicas))))
        return store

    def _on_flush(self, event, written: dict) -> None:
        when = event.virtual_time_s
        for rep in self.replicas:
            arrivals = {}
            for idx in sorted(written):
                if idx != 0:
                    arrivals[idx] = max(rep.floor, when + rep.sample())
            data_max = max(arrivals.values(), default=rep.floor)
            if 0 in written:
                arrivals[0] = max(rep.floor, data_max, when + rep.sample())
            for idx, at in arrivals.items():
                heapq.heappush(rep.queue, (at, next(self._seq), idx, written[idx]))
            rep.floor = max(arrivals.values(), default=rep.floor)

    def propagate(self, until: float) -> int:
        """Deliver every file whose arrival time is <= ``until``."""
        self.now = until
        n = 0
        for rep in self.replicas:
            while rep.queue and rep.queue[0][0] <= until:
                _, _, idx, raw = heapq.heappop(rep.queue)
                rep.store.install(idx, raw)
                rep.delivered += 1
                n += 1
        return n

    def pending(self) -> int:
        return sum(len(r.queue) for r in self.replicas)
