"""Greedy dominating-set solvers and the cardinality bound used to accept them.

The distributed solver follows a round-synchronized message-passing model:
every round, each uncovered-adjacent vertex computes its span (white
vertices in its closed neighborhood) and exchanges it with everything
within two hops; a vertex joins the set when its span beats every span it
heard, ties going to the smaller vertex id. The result is a function of
the graph alone: worker count and vertex partition change who computes
what, never what is computed.

Two execution backends produce identical output: an in-process vectorized
loop, and a fork-based multiprocess backend where workers own vertex
partitions and synchronize at per-phase barriers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import GuardError, ParameterError, PartitionError, ValidationError
from .graphs import Graph, GraphProperties

__all__ = [
    "CardinalityBound",
    "DominatingSet",
    "RoundReport",
    "DistributedResult",
    "compute_bound",
    "greedy_sequential",
    "greedy_distributed",
    "is_dominating",
    "brute_force_mds",
    "contiguous_partition",
]

BRUTE_FORCE_MAX_N = 25


@dataclass(frozen=True)
class CardinalityBound:
    """Acceptance threshold ``k``: solutions of size at most ``k`` qualify."""

    k: float


def compute_bound(props: GraphProperties) -> CardinalityBound:
    """k = n * (1 + ln(1 + delta_min)) / (1 + delta_min)."""
    if props.n < 1 or props.delta_min < 0:
        raise ParameterError("bound needs n >= 1 and delta_min >= 0")
    d = 1 + props.delta_min
    return CardinalityBound(k=props.n * (1 + math.log(d)) / d)


@dataclass(frozen=True)
class DominatingSet:
    """Sorted vertex subset tied to the vertex count it was computed against."""

    vertices: tuple[int, ...]
    graph_n: int

    def __post_init__(self):
        verts = tuple(int(v) for v in self.vertices)
        object.__setattr__(self, "vertices", verts)
        if any(v < 0 or v >= self.graph_n for v in verts):
            raise ValidationError("vertex id out of range")
        if any(a >= b for a, b in zip(verts, verts[1:])):
            raise ValidationError("vertices must be strictly increasing")

    def __len__(self) -> int:
        return len(self.vertices)

    @classmethod
    def from_iterable(cls, vertices, graph_n: int) -> "DominatingSet":
        return cls(tuple(sorted(int(v) for v in set(vertices))), graph_n)


@dataclass(frozen=True)
class RoundReport:
    """Span messages sent and admissions won by one worker in one round."""

    round: int
    worker: int
    reports: int
    admitted: int


@dataclass
class DistributedResult:
    solution: DominatingSet
    rounds: int
    contributions: list[RoundReport]
    white_per_round: list[int] = field(default_factory=list)
    admitted_per_round: list[int] = field(default_factory=list)
    completed: bool = True

    def stats_csv(self) -> str:
        lines = ["round,white,admitted\n"]
        for i, (w, a) in enumerate(zip(self.white_per_round, self.admitted_per_round), 1):
            lines.append(f"{i},{w},{a}\n")
        return "".join(lines)


def is_dominating(g: Graph, s: DominatingSet) -> tuple[bool, list[int]]:
    """Coverage sweep: mark every member and its neighbors visited, then
    accept iff the visited set is all of V. Returns (ok, uncovered ids)."""
    if s.graph_n != g.n:
        raise ValidationError(f"solution is for n={s.graph_n}, graph has n={g.n}")
    visited = np.zeros(g.n, dtype=bool)
    for v in s.vertices:
        if v < 0 or v >= g.n:
            raise ValidationError(f"vertex {v} out of range")
        visited[v] = True
        visited[g.neighbors(v)] = True
    uncovered = np.nonzero(~visited)[0]
    return uncovered.size == 0, [int(v) for v in uncovered]


def greedy_sequential(g: Graph) -> DominatingSet:
    """Centralized greedy: repeatedly admit the uncovered vertex whose closed
    neighborhood contains the most uncovered vertices, smallest id on ties."""
    n = g.n
    if n == 0:
        return DominatingSet((), 0)
    white = np.ones(n, dtype=bool)
    span = g.degrees.astype(np.int64) + 1
    ids = np.arange(n, dtype=np.int64)
    members = []
    while white.any():
        cand = np.nonzero(white)[0]
        pick = cand[np.argmax(span[cand] * n + (n - 1 - cand))]
        members.append(int(pick))
        newly = [int(w) for w in g.neighbors(pick) if white[w]]
        if white[pick]:
            newly.append(int(pick))
        for w in newly:
            white[w] = False
            span[g.neighbors(w)] -= 1
            span[w] -= 1
    del ids
    return DominatingSet.from_iterable(members, n)


def contiguous_partition(n: int, workers: int) -> np.ndarray:
    """Contiguous vertex ranges, sizes equal to within one."""
    if workers < 1:
        raise ParameterError("need at least one worker")
    sizes = [len(chunk) for chunk in np.array_split(np.arange(n), workers)]
    return np.repeat(np.arange(workers, dtype=np.int64), sizes)


def _check_partition(partition, n: int, workers: int) -> np.ndarray:
    part = np.asarray(partition, dtype=np.int64)
    if part.shape != (n,):
        raise PartitionError(range(n) if part.size == 0 else
                             [v for v in range(n) if v >= part.size])
    bad = np.nonzero((part < 0) | (part >= workers))[0]
    if bad.size:
        raise PartitionError(bad)
    return part


def _segment_reduce(ufunc, per_vertex: np.ndarray, g: Graph, empty, out_dtype=None):
    """Per-vertex reduction of ``per_vertex`` over neighbor lists."""
    gathered = per_vertex[g.indices]
    nonzero = g.degrees > 0
    if gathered.size == 0:
        return np.full(g.n, empty, dtype=out_dtype or per_vertex.dtype)
    starts = np.minimum(g.indptr[:-1], gathered.size - 1)
    # reduceat yields garbage on empty segments; the degree mask hides it
    red = ufunc.reduceat(gathered, starts)
    return np.where(nonzero, red, empty)


def greedy_distributed(
    g: Graph,
    workers: int = 1,
    partition: Optional[Sequence[int]] = None,
    *,
    max_rounds: Optional[int] = None,
    should_stop: Optional[Callable[[], bool]] = None,
    use_processes: bool = False,
) -> DistributedResult:
    """Round-synchronized greedy over a vertex partition.

    ``partition[v]`` names the worker that owns vertex ``v`` (default:
    contiguous ranges). ``max_rounds``/``should_stop`` cut the run short and
    return the partial, possibly non-dominating, set built so far with
    ``completed=False``. With ``use_processes`` the rounds execute on real
    forked workers; output is identical either way.
    """
    if workers < 1:
        raise ParameterError("need at least one worker")
    if partition is None:
        part = contiguous_partition(g.n, workers)
    else:
        part = _check_partition(partition, g.n, workers)
    if use_processes and workers > 1 and g.n > 0:
        from . import solver_mp

        return solver_mp.run_rounds_processes(
            g, part, workers, max_rounds=max_rounds
        )
    return _run_rounds_inprocess(
        g, part, workers, max_rounds=max_rounds, should_stop=should_stop
    )


def _gather_rows(g: Graph, vertices: np.ndarray) -> np.ndarray:
    """Concatenated neighbor lists of ``vertices`` in row order."""
    deg = g.degrees[vertices]
    total = int(deg.sum())
    if total == 0:
        return np.zeros(0, dtype=np.int64)
    sub_indptr = np.zeros(vertices.size + 1, dtype=np.int64)
    np.cumsum(deg, out=sub_indptr[1:])
    base = np.repeat(g.indptr[vertices], deg)
    local = np.arange(total, dtype=np.int64) - np.repeat(sub_indptr[:-1], deg)
    return g.indices[base + local]


def _run_rounds_inprocess(g, part, workers, *, max_rounds=None, should_stop=None):
    """Hybrid round engine.

    Spans are maintained incrementally (they only ever decrease). Rounds
    where most vertices still compete use dense whole-graph reductions;
    once the competing set shrinks, rounds run on the active frontier
    alone: active keys are scattered one hop out, then folded back over
    active rows, which realizes the same hop-2 maximum at a cost
    proportional to the frontier's edges. Both paths compute identical
    admissions.
    """
    from . import solver_kernels as k

    n = g.n
    white = np.ones(n, dtype=bool)
    in_set = np.zeros(n, dtype=bool)
    span = g.degrees.astype(np.int64) + 1 if n else np.zeros(0, np.int64)
    ids_rev = (n - 1) - np.arange(n, dtype=np.int64) if n else None
    relay = np.zeros(n, dtype=np.int64)  # hop-1 key maxima scratch, cleared per use
    if k.HAVE_NUMBA:
        key_buf = np.empty(n, dtype=np.int64)
        m1_buf = np.empty(n, dtype=np.int64)
        m2_buf = np.empty(n, dtype=np.int64)
        adm_buf = np.empty(n, dtype=np.int64)
        newly_buf = np.empty(n, dtype=np.int64)
    contributions: list[RoundReport] = []
    white_hist: list[int] = []
    admit_hist: list[int] = []
    rounds = 0
    completed = True
    two_m = int(g.indices.size)
    while n:
        active = np.nonzero(span > 0)[0]
        if active.size == 0:
            break
        if max_rounds is not None and rounds >= max_rounds:
            completed = False
            break
        if should_stop is not None and should_stop():
            completed = False
            break
        rounds += 1
        active_edges = int(g.degrees[active].sum())
        dense = active_edges * 2 >= two_m
        if k.HAVE_NUMBA:
            if dense:
                k.key_from_span(span, key_buf)
                k.closed_segmax(g.indptr, g.indices, key_buf, m1_buf)
                k.closed_segmax(g.indptr, g.indices, m1_buf, m2_buf)
                admitted = np.nonzero((span > 0) & (key_buf == m2_buf))[0]
            else:
                cnt = k.sparse_round(g.indptr, g.indices, active, span, relay, adm_buf)
                admitted = adm_buf[:cnt].copy()
        elif dense:
            key = span * n + ids_rev
            m1 = np.maximum(key, _segment_reduce(np.maximum, key, g, empty=-1))
            m2 = np.maximum(m1, _segment_reduce(np.maximum, m1, g, empty=-1))
            admitted = np.nonzero((span > 0) & (key == m2))[0]
        else:
            key_active = span[active] * n + (n - 1 - active)
            dst = _gather_rows(g, active)
            np.maximum.at(relay, dst, np.repeat(key_active, g.degrees[active]))
            np.maximum.at(relay, active, key_active)
            if dst.size:
                sub_indptr = np.zeros(active.size + 1, dtype=np.int64)
                np.cumsum(g.degrees[active], out=sub_indptr[1:])
                gathered = relay[dst]
                starts = np.minimum(sub_indptr[:-1], gathered.size - 1)
                row_max = np.where(
                    g.degrees[active] > 0, np.maximum.reduceat(gathered, starts), -1
                )
            else:
                row_max = np.full(active.size, -1, dtype=np.int64)
            m2_active = np.maximum(relay[active], row_max)
            admitted = active[key_active == m2_active]
            relay[dst] = 0
            relay[active] = 0
        rep_counts = np.bincount(part[active], minlength=workers)
        adm_counts = np.bincount(part[admitted], minlength=workers)
        contributions.extend(
            RoundReport(rounds, w, int(rep_counts[w]), int(adm_counts[w]))
            for w in range(workers)
        )
        white_hist.append(int(np.count_nonzero(white)))
        admit_hist.append(int(admitted.size))
        in_set[admitted] = True
        if k.HAVE_NUMBA:
            k.apply_admissions(g.indptr, g.indices, admitted, white, span, newly_buf)
        else:
            touched = np.concatenate([admitted, _gather_rows(g, admitted)])
            newly = np.unique(touched[white[touched]])
            white[newly] = False
            np.subtract.at(span, _gather_rows(g, newly), 1)
            span[newly] -= 1
    solution = DominatingSet.from_iterable(np.nonzero(in_set)[0], n)
    return DistributedResult(
        solution=solution,
        rounds=rounds,
        contributions=contributions,
        white_per_round=white_hist,
        admitted_per_round=admit_hist,
        completed=completed,
    )


def complete_with_uncovered(g: Graph, partial: DominatingSet) -> DominatingSet:
    """Close out a truncated run by admitting every still-uncovered vertex."""
    ok, uncovered = is_dominating(g, partial)
    if ok:
        return partial
    return DominatingSet.from_iterable(list(partial.vertices) + uncovered, g.n)


def brute_force_mds(g: Graph) -> DominatingSet:
    """Minimum dominating set by subset enumeration in increasing size.

    Test oracle only; guarded to n <= 25. Returns the lexicographically
    smallest optimum.
    """
    n = g.n
    if n > BRUTE_FORCE_MAX_N:
        raise GuardError(f"brute force is guarded to n <= {BRUTE_FORCE_MAX_N}, got {n}")
    if n == 0:
        return DominatingSet((), 0)
    closed = [0] * n
    for v in range(n):
        mask = 1 << v
        for u in g.neighbors(v):
            mask |= 1 << int(u)
        closed[v] = mask
    full = (1 << n) - 1
    for size in range(1, n + 1):
        for combo in combinations(range(n), size):
            acc = 0
            for v in combo:
                acc |= closed[v]
            if acc == full:
                return DominatingSet(combo, n)
    raise AssertionError("unreachable: V itself always dominates")
