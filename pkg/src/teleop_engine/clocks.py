"""Manual clock for deterministic, pacing-free runs (benchmarks and tests).

A session takes (clock, sleep_fn) callables; with a FakeClock, sleep advances
virtual time instantly and every tick lands on an exact multiple of the loop
period.
"""

from __future__ import annotations


class FakeClock:
    def __init__(self, start: float = 0.0):
        self._t = float(start)

    def time(self) -> float:
        return self._t

    def sleep(self, dt: float) -> None:
        if dt > 0:
            self._t += dt

    def advance(self, dt: float) -> None:
        self._t += dt
