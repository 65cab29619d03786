"""JIT-compiled inner loops for the round engine.

Everything here has a vectorized numpy twin in ``solver``/``solver_mp``;
these exist because the per-round neighbor sweeps dominate solve time on
large instances. When numba is unavailable the callers fall back to the
numpy paths and compute the same values.
"""

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(func):
            return func

        if len(args) == 1 and callable(args[0]):
            return args[0]
        return wrap


@njit(cache=True)
def key_from_span(span, key):
    """key[v] = span[v] * n + (n - 1 - v); ranks by span, then smaller id."""
    n = span.size
    for v in range(n):
        key[v] = span[v] * n + (n - 1 - v)


@njit(cache=True)
def closed_segmax(indptr, indices, vals, out):
    """out[u] = max of vals over the closed neighborhood of u."""
    for u in range(indptr.size - 1):
        best = vals[u]
        for t in range(indptr[u], indptr[u + 1]):
            w = vals[indices[t]]
            if w > best:
                best = w
        out[u] = best


@njit(cache=True)
def closed_segmax_rows(row_indptr, row_indices, own, vals, out):
    """Closed-neighborhood maxima for an owned row subset of the CSR."""
    for i in range(own.size):
        best = vals[own[i]]
        for t in range(row_indptr[i], row_indptr[i + 1]):
            w = vals[row_indices[t]]
            if w > best:
                best = w
        out[i] = best


@njit(cache=True)
def span_rows(row_indptr, row_indices, own, white8, out):
    """Per-owned-vertex count of white vertices in the closed neighborhood."""
    for i in range(own.size):
        s = 1 if white8[own[i]] != 0 else 0
        for t in range(row_indptr[i], row_indptr[i + 1]):
            if white8[row_indices[t]] != 0:
                s += 1
        out[i] = s


@njit(cache=True)
def retire_rows(row_indptr, row_indices, own, admit8, white8):
    """Clear the white flag of owned vertices covered by an admission."""
    for i in range(own.size):
        v = own[i]
        if white8[v] == 0:
            continue
        cov = admit8[v] != 0
        if not cov:
            for t in range(row_indptr[i], row_indptr[i + 1]):
                if admit8[row_indices[t]] != 0:
                    cov = True
                    break
        if cov:
            white8[v] = 0


@njit(cache=True)
def sparse_round(indptr, indices, active, span, relay, admitted_out):
    """One round restricted to the active frontier.

    Scatters each active key over its closed neighborhood (hop-1 maxima in
    ``relay``), folds the relay back over active rows (hop-2 maxima), and
    admits active vertices whose own key equals the fold. ``relay`` must be
    all zero on entry and is re-zeroed before returning.
    """
    n = indptr.size - 1
    for i in range(active.size):
        v = active[i]
        kv = span[v] * n + (n - 1 - v)
        if kv > relay[v]:
            relay[v] = kv
        for t in range(indptr[v], indptr[v + 1]):
            u = indices[t]
            if kv > relay[u]:
                relay[u] = kv
    cnt = 0
    for i in range(active.size):
        v = active[i]
        kv = span[v] * n + (n - 1 - v)
        best = relay[v]
        for t in range(indptr[v], indptr[v + 1]):
            w = relay[indices[t]]
            if w > best:
                best = w
        if kv == best:
            admitted_out[cnt] = v
            cnt += 1
    for i in range(active.size):
        v = active[i]
        relay[v] = 0
        for t in range(indptr[v], indptr[v + 1]):
            relay[indices[t]] = 0
    return cnt


@njit(cache=True)
def apply_admissions(indptr, indices, admitted, white, span, newly_out):
    """Cover the admitted vertices' closed neighborhoods and decrement spans.

    Returns the number of newly covered vertices written to ``newly_out``.
    """
    cnt = 0
    for i in range(admitted.size):
        v = admitted[i]
        if white[v]:
            white[v] = False
            newly_out[cnt] = v
            cnt += 1
        for t in range(indptr[v], indptr[v + 1]):
            u = indices[t]
            if white[u]:
                white[u] = False
                newly_out[cnt] = u
                cnt += 1
    for i in range(cnt):
        w = newly_out[i]
        span[w] -= 1
        for t in range(indptr[w], indptr[w + 1]):
            span[indices[t]] -= 1
    return cnt


def warm_up():
    """Trigger JIT compilation so forked workers inherit compiled code."""
    if not HAVE_NUMBA:
        return
    indptr = np.array([0, 1, 2], dtype=np.int64)
    indices = np.array([1, 0], dtype=np.int64)
    span = np.array([2, 2], dtype=np.int64)
    key = np.empty(2, dtype=np.int64)
    out = np.empty(2, dtype=np.int64)
    white = np.ones(2, dtype=bool)
    white8 = np.ones(2, dtype=np.int8)
    own = np.array([0, 1], dtype=np.int64)
    key_from_span(span, key)
    closed_segmax(indptr, indices, key, out)
    closed_segmax_rows(indptr, indices, own, key, out)
    span_rows(indptr, indices, own, white8, out)
    retire_rows(indptr, indices, own, np.zeros(2, np.int8), white8)
    relay = np.zeros(2, dtype=np.int64)
    buf = np.empty(2, dtype=np.int64)
    sparse_round(indptr, indices, own, span, relay, buf)
    apply_admissions(indptr, indices, buf[:0], white, span, buf)
