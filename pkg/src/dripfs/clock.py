"""Clocks for the epoch scheduler.

Tests and benchmarks use ``VirtualClock`` so runs are deterministic; the
daemon uses ``WallClock``.
"""

from __future__ import annotations

import threading
import time


class VirtualClock:
    """Time only moves when someone sleeps. ``wall()`` mirrors virtual time
    so recorded traces are reproducible."""

    def __init__(self, start: float = 0.0):
        self._now = float(start)

    def now(self) -> float:
        return self._now

    def wall(self) -> float:
        return self._now

    def sleep_until(self, when: float) -> None:
        if when > self._now:
            self._now = float(when)

    def advance(self, dt: float) -> None:
        self._now += dt


class WallClock:
    """Monotonic seconds since construction, offset by ``start``."""

    def __init__(self, stop: threading.Event | None = None, start: float = 0.0):
        self._origin = time.monotonic() - start
        self.stop = stop or threading.Event()

    def now(self) -> float:
        return time.monotonic() - self._origin

    def wall(self) -> float:
        return time.time()

    def sleep_until(self, when: float) -> None:
        delay = when - self.now()
        if delay > 0:
            self.stop.wait(delay)
