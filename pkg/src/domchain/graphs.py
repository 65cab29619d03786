"""Graph representation, synthetic generators, and isomorphic relabeling.

Vertices are dense integer labels ``0..n-1``. Graphs are undirected and
simple (no self-loops, no parallel edges). The adjacency is stored
CSR-style as ``(indptr, indices)`` with every vertex's neighbor slice
sorted ascending. Arrays are frozen after construction, so instances are
safe to share between solver workers.

The on-disk format is a text header ``"n m"`` followed by one ``"u v"``
line per edge with ``u < v``, edges sorted. Readers transparently accept
the gzip-compressed variant.
"""

from __future__ import annotations

import gzip
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DecodeError, ParameterError, ValidationError

__all__ = [
    "Graph",
    "GraphProperties",
    "VertexPermutation",
    "generate_ba",
    "generate_er",
    "make_isomorph",
    "apply_permutation",
    "make_instance_pool",
    "properties",
    "graph_to_bytes",
    "graph_from_bytes",
    "write_graph",
    "read_graph",
]


class Graph:
    """Immutable undirected simple graph over vertices ``0..n-1``."""

    __slots__ = ("n", "indptr", "indices")

    def __init__(self, n: int, indptr: np.ndarray, indices: np.ndarray):
        self.n = int(n)
        self.indptr = indptr
        self.indices = indices
        for arr in (indptr, indices):
            arr.setflags(write=False)

    @classmethod
    def from_edges(cls, n: int, edges) -> "Graph":
        """Build from an iterable or ``(k, 2)`` array of endpoint pairs.

        Duplicate pairs collapse to a single edge; self-loops are rejected.
        """
        if n < 0:
            raise ParameterError("vertex count must be nonnegative")
        arr = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges,
                         dtype=np.int64)
        if arr.size == 0:
            arr = arr.reshape(0, 2)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise ValidationError("edges must be pairs")
        if arr.size and (arr.min() < 0 or arr.max() >= n):
            raise ValidationError("edge endpoint out of range")
        if arr.size and np.any(arr[:, 0] == arr[:, 1]):
            raise ValidationError("self-loops are not allowed")
        both = np.concatenate([arr, arr[:, ::-1]]) if arr.size else arr
        if both.size:
            order = np.lexsort((both[:, 1], both[:, 0]))
            both = both[order]
            keep = np.ones(len(both), dtype=bool)
            keep[1:] = np.any(both[1:] != both[:-1], axis=1)
            both = both[keep]
        counts = np.bincount(both[:, 0], minlength=n) if both.size else np.zeros(n, np.int64)
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(counts, out=indptr[1:])
        indices = both[:, 1].astype(np.int64) if both.size else np.zeros(0, np.int64)
        return cls(n, indptr, indices)

    @property
    def m(self) -> int:
        return int(self.indices.size // 2)

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def degree(self, v: int) -> int:
        return int(self.indptr[v + 1] - self.indptr[v])

    def neighbors(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    def edge_array(self) -> np.ndarray:
        """All edges as an ``(m, 2)`` array with ``u < v``, sorted."""
        src = np.repeat(np.arange(self.n, dtype=np.int64), self.degrees)
        mask = src < self.indices
        return np.column_stack([src[mask], self.indices[mask]])

    def has_edge(self, u: int, v: int) -> bool:
        row = self.neighbors(u)
        pos = np.searchsorted(row, v)
        return bool(pos < row.size and row[pos] == v)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Graph)
            and self.n == other.n
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
        )

    __hash__ = None

    def __repr__(self) -> str:
        return f"Graph(n={self.n}, m={self.m})"


@dataclass(frozen=True)
class GraphProperties:
    n: int
    m: int
    delta_min: int
    delta_max: int
    avg_degree: float


@dataclass(frozen=True)
class VertexPermutation:
    """Bijection on ``0..n-1``; ``mapping[u]`` is the new label of vertex ``u``."""

    mapping: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.mapping, dtype=np.int64)
        object.__setattr__(self, "mapping", arr)
        n = arr.size
        if not np.array_equal(np.sort(arr), np.arange(n)):
            raise ValidationError("mapping is not a bijection on 0..n-1")
        arr.setflags(write=False)

    @property
    def n(self) -> int:
        return int(self.mapping.size)

    def inverse(self) -> "VertexPermutation":
        inv = np.empty_like(self.mapping)
        inv[self.mapping] = np.arange(self.n)
        return VertexPermutation(inv)

    def apply(self, vertices) -> np.ndarray:
        """Relabel a vertex array through the permutation."""
        return self.mapping[np.asarray(vertices, dtype=np.int64)]


def properties(g: Graph) -> GraphProperties:
    """Exact ``n``, ``m``, minimum/maximum degree, and average degree."""
    if g.n < 1:
        raise ParameterError("properties need at least one vertex")
    deg = g.degrees
    return GraphProperties(
        n=g.n,
        m=g.m,
        delta_min=int(deg.min()),
        delta_max=int(deg.max()),
        avg_degree=2.0 * g.m / g.n,
    )


def generate_ba(n: int, attach: int, seed) -> Graph:
    """Preferential-attachment graph: a seed clique on ``attach`` vertices,
    then each new vertex attaches to ``attach`` distinct existing vertices
    sampled proportionally to degree.

    Edge count is exactly ``attach*(n-attach) + C(attach,2)``; the graph is
    connected, and the result is a deterministic function of the seed.
    """
    if attach < 1 or n <= attach:
        raise ParameterError(f"need n > attach >= 1, got n={n} attach={attach}")
    rng = np.random.default_rng(seed)
    clique_m = attach * (attach - 1) // 2
    total_m = attach * (n - attach) + clique_m
    edges = np.empty((total_m, 2), dtype=np.int64)
    # one slot per degree unit; uniform draws from it realize the
    # degree-proportional attachment probability
    repeated = np.empty(2 * total_m, dtype=np.int64)
    fill = 0
    e = 0
    for i in range(attach):
        for j in range(i + 1, attach):
            edges[e] = (i, j)
            e += 1
            repeated[fill] = i
            repeated[fill + 1] = j
            fill += 2
    targets = np.empty(attach, dtype=np.int64)
    for v in range(attach, n):
        if fill == 0:
            # attach == 1: the degree pool is empty until the first edge lands
            targets[0] = 0
            edges[e] = (0, v)
            e += 1
            repeated[0] = 0
            repeated[1] = v
            fill = 2
            continue
        got = 0
        seen = set()
        while got < attach:
            draws = rng.integers(0, fill, size=attach - got)
            for t in repeated[draws]:
                t = int(t)
                if t not in seen:
                    seen.add(t)
                    targets[got] = t
                    got += 1
                    if got == attach:
                        break
        for t in targets:
            edges[e] = (t, v)
            e += 1
        repeated[fill:fill + attach] = targets
        fill += attach
        repeated[fill:fill + attach] = v
        fill += attach
    return Graph.from_edges(n, edges)


def generate_er(n: int, p: float, seed) -> Graph:
    """G(n, p): every unordered pair is an edge independently with probability p."""
    if n < 0:
        raise ParameterError("vertex count must be nonnegative")
    if not 0.0 <= p <= 1.0:
        raise ParameterError(f"edge probability must be in [0, 1], got {p}")
    rng = np.random.default_rng(seed)
    chunks = []
    for u in range(n - 1):
        hits = np.nonzero(rng.random(n - u - 1) < p)[0]
        if hits.size:
            pairs = np.empty((hits.size, 2), dtype=np.int64)
            pairs[:, 0] = u
            pairs[:, 1] = hits + u + 1
            chunks.append(pairs)
    edges = np.concatenate(chunks) if chunks else np.zeros((0, 2), np.int64)
    return Graph.from_edges(n, edges)


def apply_permutation(g: Graph, perm: VertexPermutation) -> Graph:
    """Relabel ``g`` through ``perm``: edge (u, v) becomes (perm[u], perm[v])."""
    if perm.n != g.n:
        raise ValidationError(f"permutation size {perm.n} != graph size {g.n}")
    return Graph.from_edges(g.n, perm.apply(g.edge_array()))


def make_isomorph(g: Graph, seed) -> tuple[Graph, VertexPermutation]:
    """Uniformly random relabeled copy of ``g`` plus the permutation used.

    The permutation maps original labels to isomorph labels; its inverse
    carries any solution on the isomorph back to the original instance.
    """
    rng = np.random.default_rng(seed)
    return _isomorph_with_rng(g, rng)


def _isomorph_with_rng(g: Graph, rng) -> tuple[Graph, VertexPermutation]:
    perm = VertexPermutation(rng.permutation(g.n))
    return apply_permutation(g, perm), perm


def make_instance_pool(g: Graph, z: int, seed) -> list[tuple[Graph, VertexPermutation]]:
    """``z`` independently relabeled copies; deterministic per seed.

    The permutations are returned so the instance owner can retain them
    privately and map winning solutions back onto the original graph.
    """
    if z < 1:
        raise ParameterError("instance count must be at least 1")
    children = np.random.SeedSequence(seed).spawn(z)
    return [_isomorph_with_rng(g, np.random.default_rng(child)) for child in children]


def graph_to_bytes(g: Graph) -> bytes:
    """Canonical uncompressed file encoding; used for storage and signing."""
    lines = [f"{g.n} {g.m}\n"]
    edges = g.edge_array()
    lines.extend(f"{u} {v}\n" for u, v in edges)
    return "".join(lines).encode("ascii")


def graph_from_bytes(data: bytes) -> Graph:
    if data[:2] == b"\x1f\x8b":
        data = gzip.decompress(data)
    text = data.decode("ascii")
    lines = text.splitlines()
    if not lines:
        raise DecodeError("empty graph file")
    head = lines[0].split()
    if len(head) != 2:
        raise DecodeError(f"bad header line: {lines[0]!r}")
    n, m = int(head[0]), int(head[1])
    body = [ln for ln in lines[1:] if ln.strip()]
    if len(body) != m:
        raise DecodeError(f"header claims {m} edges, file has {len(body)}")
    edges = np.empty((m, 2), dtype=np.int64)
    for i, ln in enumerate(body):
        parts = ln.split()
        if len(parts) != 2:
            raise DecodeError(f"bad edge line: {ln!r}")
        u, v = int(parts[0]), int(parts[1])
        if not u < v:
            raise DecodeError(f"edge line must have u < v: {ln!r}")
        edges[i] = (u, v)
    g = Graph.from_edges(n, edges)
    if g.m != m:
        raise DecodeError("duplicate edges in file")
    return g


def write_graph(g: Graph, path, compress: bool = False) -> None:
    raw = graph_to_bytes(g)
    if compress:
        # fixed mtime keeps the compressed bytes reproducible
        raw = gzip.compress(raw, mtime=0)
    with open(path, "wb") as fh:
        fh.write(raw)


def read_graph(path) -> Graph:
    with open(path, "rb") as fh:
        return graph_from_bytes(fh.read())
