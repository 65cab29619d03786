"""Millisecond clocks: real wall time for mining, a virtual clock for simulation."""

import time


class WallClock:
    """Monotonic wall time in integer milliseconds."""

    def now_ms(self) -> int:
        return time.monotonic_ns() // 1_000_000


class VirtualClock:
    """Deterministic clock advanced explicitly by the simulator."""

    def __init__(self, start_ms: int = 0):
        self._now = int(start_ms)

    def now_ms(self) -> int:
        return self._now

    def advance(self, ms: int) -> None:
        if ms < 0:
            raise ValueError("clock cannot move backwards")
        self._now += int(ms)

    def jump_to(self, ms: int) -> None:
        if ms < self._now:
            raise ValueError("clock cannot move backwards")
        self._now = int(ms)
