"""Forked-worker backend for the round-synchronized greedy solver.

Each worker owns a vertex partition and runs the same per-round phases as
the in-process loop: publish spans, fold hop-1 maxima, fold hop-2 maxima
and decide admissions, then retire covered vertices. Phase results live in
anonymous shared memory; a barrier separates the phases, so no value is
read while it can still be written. The computed set is bit-identical to
the in-process backend; only wall time depends on the worker count.
"""

from __future__ import annotations

import multiprocessing
import warnings
from multiprocessing import sharedctypes

import numpy as np

from .errors import DomchainError
from .graphs import Graph
from .solver import DistributedResult, DominatingSet, RoundReport

_BARRIER_TIMEOUT_S = 600.0


class _SubCsr:
    """Rows of the global CSR owned by one worker (neighbor ids stay global)."""

    def __init__(self, g: Graph, own: np.ndarray):
        self.own = own
        deg = g.degrees[own]
        self.deg = deg
        self.indptr = np.zeros(own.size + 1, dtype=np.int64)
        np.cumsum(deg, out=self.indptr[1:])
        total = int(self.indptr[-1])
        if total:
            starts = g.indptr[own]
            base = np.repeat(starts, deg)
            local = np.arange(total, dtype=np.int64) - np.repeat(self.indptr[:-1], deg)
            self.indices = g.indices[base + local]
        else:
            self.indices = np.zeros(0, dtype=np.int64)

    def reduce(self, ufunc, per_vertex: np.ndarray, empty):
        if self.own.size == 0:
            return np.zeros(0, dtype=per_vertex.dtype)
        gathered = per_vertex[self.indices]
        if gathered.size == 0:
            return np.full(self.own.size, empty, dtype=per_vertex.dtype)
        starts = np.minimum(self.indptr[:-1], gathered.size - 1)
        red = ufunc.reduceat(gathered, starts)
        return np.where(self.deg > 0, red, empty)


def _shared(typecode: str, count: int) -> np.ndarray:
    raw = sharedctypes.RawArray(typecode, max(count, 1))
    arr = np.frombuffer(raw, dtype={"q": np.int64, "b": np.int8}[typecode], count=max(count, 1))
    return arr[:count] if count else arr[:0]


def _worker_loop(wid, sub, n, white8, key, m1, admit8, rep_counts, adm_counts, cont, barrier):
    from . import solver_kernels as k

    own = sub.own
    ids_rev_own = (n - 1) - own
    span_own = np.empty(own.size, dtype=np.int64)
    m2_own = np.empty(own.size, dtype=np.int64)
    try:
        while True:
            barrier.wait(timeout=_BARRIER_TIMEOUT_S)
            if cont[0] == 0:
                return
            if k.HAVE_NUMBA:
                k.span_rows(sub.indptr, sub.indices, own, white8, span_own)
            else:
                ws = white8.view(np.bool_).astype(np.int64)
                span_own = ws[own] + sub.reduce(np.add, ws, empty=0)
            key_own = span_own * n + ids_rev_own
            key[own] = key_own
            rep_counts[wid] = int(np.count_nonzero(span_own > 0))
            barrier.wait(timeout=_BARRIER_TIMEOUT_S)
            if k.HAVE_NUMBA:
                k.closed_segmax_rows(sub.indptr, sub.indices, own, key, m2_own)
                m1[own] = m2_own  # m2_own doubles as the hop-1 scratch buffer
            else:
                m1[own] = np.maximum(key_own, sub.reduce(np.maximum, key, empty=-1))
            barrier.wait(timeout=_BARRIER_TIMEOUT_S)
            if k.HAVE_NUMBA:
                k.closed_segmax_rows(sub.indptr, sub.indices, own, m1, m2_own)
            else:
                m2_own = np.maximum(m1[own], sub.reduce(np.maximum, m1, empty=-1))
            admit_own = (span_own > 0) & (key_own == m2_own)
            admit8[own] = admit_own.astype(np.int8)
            adm_counts[wid] = int(np.count_nonzero(admit_own))
            barrier.wait(timeout=_BARRIER_TIMEOUT_S)
            if k.HAVE_NUMBA:
                k.retire_rows(sub.indptr, sub.indices, own, admit8, white8)
            else:
                white = white8.view(np.bool_)
                covered_own = admit_own | (sub.reduce(np.maximum, admit8, empty=0) > 0)
                white8[own] = (white[own] & ~covered_own).astype(np.int8)
            barrier.wait(timeout=_BARRIER_TIMEOUT_S)
    except Exception:
        barrier.abort()
        raise


def run_rounds_processes(g: Graph, part: np.ndarray, workers: int, *, max_rounds=None):
    ctx = multiprocessing.get_context("fork") if _fork_available() else None
    if ctx is None:
        warnings.warn("fork start method unavailable; falling back to in-process solver")
        from .solver import _run_rounds_inprocess

        return _run_rounds_inprocess(g, part, workers, max_rounds=max_rounds)

    from . import solver_kernels

    solver_kernels.warm_up()  # compile before forking so children inherit JIT code

    n = g.n
    white8 = _shared("b", n)
    key = _shared("q", n)
    m1 = _shared("q", n)
    admit8 = _shared("b", n)
    rep_counts = _shared("q", workers)
    adm_counts = _shared("q", workers)
    cont = _shared("q", 1)
    white8[:] = 1
    barrier = ctx.Barrier(workers + 1)
    subs = [_SubCsr(g, np.nonzero(part == w)[0]) for w in range(workers)]
    procs = [
        ctx.Process(
            target=_worker_loop,
            args=(w, subs[w], n, white8, key, m1, admit8, rep_counts, adm_counts, cont, barrier),
            daemon=True,
        )
        for w in range(workers)
    ]
    for p in procs:
        p.start()

    in_set = np.zeros(n, dtype=bool)
    contributions: list[RoundReport] = []
    white_hist: list[int] = []
    admit_hist: list[int] = []
    rounds = 0
    completed = True
    try:
        while True:
            white = white8.view(np.bool_)
            remaining = int(np.count_nonzero(white))
            stop = remaining == 0 or (max_rounds is not None and rounds >= max_rounds)
            if stop:
                completed = remaining == 0
                cont[0] = 0
                barrier.wait(timeout=_BARRIER_TIMEOUT_S)
                break
            cont[0] = 1
            barrier.wait(timeout=_BARRIER_TIMEOUT_S)  # workers: spans
            rounds += 1
            white_hist.append(remaining)
            barrier.wait(timeout=_BARRIER_TIMEOUT_S)  # spans stable
            reps = rep_counts.copy()
            barrier.wait(timeout=_BARRIER_TIMEOUT_S)  # hop-1 maxima stable
            barrier.wait(timeout=_BARRIER_TIMEOUT_S)  # admissions stable
            admit = admit8.view(np.bool_)
            in_set |= admit
            admit_hist.append(int(np.count_nonzero(admit)))
            adms = adm_counts.copy()
            contributions.extend(
                RoundReport(rounds, w, int(reps[w]), int(adms[w])) for w in range(workers)
            )
            barrier.wait(timeout=_BARRIER_TIMEOUT_S)  # covered vertices retired
    except Exception:
        for p in procs:
            p.terminate()
        raise DomchainError("parallel solver failed; see worker traceback above")
    finally:
        for p in procs:
            p.join(timeout=30)
            if p.is_alive():
                p.terminate()

    solution = DominatingSet.from_iterable(np.nonzero(in_set)[0], n)
    return DistributedResult(
        solution=solution,
        rounds=rounds,
        contributions=contributions,
        white_per_round=white_hist,
        admitted_per_round=admit_hist,
        completed=completed,
    )


def _fork_available() -> bool:
    try:
        return "fork" in multiprocessing.get_all_start_methods()
    except Exception:
        return False
