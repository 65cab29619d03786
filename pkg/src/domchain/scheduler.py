"""Benchmark-backed lookup table and block-interval estimation.

A table row records the measured solve-plus-verify time for one benchmark
instance. The interval granted for a new instance scales the best matching
row (largest vertex count not above the query) by the edge-vertex product
ratio, then stretches by the safety multiplier ``l > 1`` so an honest pool
running the same greedy finishes comfortably inside the window.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

from .errors import ParameterError
from .graphs import Graph
from .solver import greedy_distributed, is_dominating

logger = logging.getLogger(__name__)

__all__ = ["LookupRow", "LookupTable", "build_lookup", "estimate_tmax"]

DEFAULT_MULTIPLIER = 1.5


@dataclass(frozen=True)
class LookupRow:
    n: int
    m: int
    tau_ms: int  # measured generation + verification time

    def __post_init__(self):
        if self.tau_ms <= 0:
            raise ParameterError("measured time must be positive")


@dataclass(frozen=True)
class LookupTable:
    rows: tuple[LookupRow, ...]
    multiplier: float = DEFAULT_MULTIPLIER

    def __post_init__(self):
        if not self.rows:
            raise ParameterError("lookup table needs at least one row")
        if self.multiplier <= 1.0:
            raise ParameterError("multiplier must exceed 1")
        object.__setattr__(
            self, "rows", tuple(sorted(self.rows, key=lambda r: (r.n, r.m)))
        )

    def select_row(self, n: int) -> LookupRow:
        """Largest row vertex count not exceeding ``n``; smallest row when
        the query undershoots the whole table."""
        best = None
        for row in self.rows:
            if row.n <= n:
                best = row
            else:
                break
        return best if best is not None else self.rows[0]

    def estimate_tmax(self, n: int, m: int) -> float:
        """Granted interval in ms: l * tau * (m * n) / (m' * n')."""
        row = self.select_row(n)
        return self.multiplier * row.tau_ms * (m * n) / (row.m * row.n)

    def to_csv(self) -> str:
        lines = ["n,m,tau_ms\n"]
        lines.extend(f"{r.n},{r.m},{r.tau_ms}\n" for r in self.rows)
        return "".join(lines)

    @classmethod
    def from_csv(cls, text: str, multiplier: float = DEFAULT_MULTIPLIER) -> "LookupTable":
        rows = []
        lines = [ln for ln in text.splitlines() if ln.strip()]
        for ln in lines[1:]:
            n, m, tau = ln.split(",")
            rows.append(LookupRow(int(n), int(m), int(tau)))
        return cls(tuple(rows), multiplier)


def estimate_tmax(table: LookupTable, n: int, m: int) -> float:
    return table.estimate_tmax(n, m)


def _measure_wall(fn) -> float:
    t0 = time.perf_counter()
    fn()
    return (time.perf_counter() - t0) * 1000.0


def build_lookup(
    instances: Sequence[Graph],
    solver: Optional[Callable] = None,
    workers: int = 1,
    multiplier: float = DEFAULT_MULTIPLIER,
    *,
    measure: Optional[Callable] = None,
) -> LookupTable:
    """Measure generation plus verification time per benchmark instance.

    ``solver`` defaults to the distributed greedy with ``workers`` workers;
    instances whose solve raises are skipped with a warning. ``measure``
    overrides the wall-clock timer (tests inject deterministic timers).
    """
    if not instances:
        raise ParameterError("need at least one benchmark instance")
    solve = solver or (lambda g: greedy_distributed(g, workers=workers))
    timer = measure or _measure_wall
    rows = []
    for g in instances:
        try:
            holder = {}

            def run(g=g, holder=holder):
                holder["result"] = solve(g)
                is_dominating(g, holder["result"].solution)

            elapsed_ms = timer(run)
        except Exception as exc:  # noqa: BLE001 - row-level isolation
            logger.warning("skipping benchmark instance n=%d: %s", g.n, exc)
            continue
        rows.append(LookupRow(n=g.n, m=g.m, tau_ms=max(1, round(elapsed_ms))))
    if not rows:
        raise ParameterError("every benchmark instance failed")
    return LookupTable(tuple(rows), multiplier)
