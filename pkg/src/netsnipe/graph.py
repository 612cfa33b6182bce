"""Directed interference graphs with mandatory self-loops.

Row ``i`` of the adjacency holds the in-neighbors ``N_i`` of unit ``i``, so a
unit's outcome may depend on the treatments of exactly the units in that row.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.spatial import ConvexHull, QhullError, cKDTree
from scipy.spatial.distance import cdist


class GraphError(ValueError):
    """Raised for malformed graphs or invalid generator arguments."""


@dataclass(frozen=True, eq=False)
class Graph:
    """Immutable in-neighbor lists stored in CSR form.

    ``indices[indptr[i]:indptr[i+1]]`` is the sorted list ``N_i``. Use
    :meth:`from_lists` or :meth:`from_edges` rather than building it directly.
    """

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.n < 1:
            raise GraphError("graph needs at least one unit")
        if self.indptr.shape != (self.n + 1,) or self.indptr[0] != 0:
            raise GraphError("bad indptr")
        if self.indices.size and (self.indices.min() < 0 or self.indices.max() >= self.n):
            raise GraphError("neighbor index out of range")
        for arr in (self.indptr, self.indices):
            arr.setflags(write=False)

    @classmethod
    def from_edges(cls, n: int, src, dst) -> "Graph":
        """Build from edge lists where ``src[k] in N_{dst[k]}``. Self-loops are added."""
        n = int(n)
        if n < 1:
            raise GraphError("graph needs at least one unit")
        src = np.asarray(src, dtype=np.int64).ravel()
        dst = np.asarray(dst, dtype=np.int64).ravel()
        if src.shape != dst.shape:
            raise GraphError("src and dst must have equal length")
        if src.size and (min(src.min(), dst.min()) < 0 or max(src.max(), dst.max()) >= n):
            raise GraphError("edge endpoint out of range")
        loops = np.arange(n, dtype=np.int64)
        rows = np.concatenate([dst, loops])
        cols = np.concatenate([src, loops])
        adj = sp.csr_array((np.ones(rows.size, dtype=np.int8), (rows, cols)), shape=(n, n))
        adj.sum_duplicates()
        adj.sort_indices()
        return cls(n, adj.indptr.astype(np.int64), adj.indices.astype(np.int64))

    @classmethod
    def from_lists(cls, lists) -> "Graph":
        """Build from per-unit in-neighbor iterables."""
        lists = [list(nb) for nb in lists]
        dst = [i for i, nb in enumerate(lists) for _ in nb]
        src = [j for nb in lists for j in nb]
        return cls.from_edges(len(lists), src, dst)

    @classmethod
    def self_loops(cls, n: int) -> "Graph":
        return cls.from_edges(n, [], [])

    def neighbors(self, i: int) -> np.ndarray:
        if not 0 <= i < self.n:
            raise IndexError(f"unit {i} out of range for n={self.n}")
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    @property
    def in_neighbors(self) -> list[np.ndarray]:
        return [self.neighbors(i) for i in range(self.n)]

    @property
    def in_degree(self) -> np.ndarray:
        return np.diff(self.indptr)

    def adjacency(self) -> sp.csr_array:
        """0/1 matrix with ``A[i, j] = 1`` iff ``j in N_i`` (unit diagonal)."""
        data = np.ones(self.indices.size, dtype=np.float64)
        return sp.csr_array((data, self.indices, self.indptr), shape=(self.n, self.n))

    def out_neighbors(self) -> list[np.ndarray]:
        """Inverted index: for each ``j`` the units ``i`` with ``j in N_i``."""
        if "out" not in self._cache:
            t = self.adjacency().T.tocsr()
            t.sort_indices()
            self._cache["out"] = [t.indices[t.indptr[j]:t.indptr[j + 1]].astype(np.int64)
                                  for j in range(self.n)]
        return self._cache["out"]

    def overlapping_partners(self, i: int) -> np.ndarray:
        """Units whose in-neighborhood intersects ``N_i`` (including ``i``)."""
        out = self.out_neighbors()
        return np.unique(np.concatenate([out[j] for j in self.neighbors(i)]))

    def components(self) -> tuple[int, np.ndarray]:
        """Weakly connected components; units in different ones share no treatments."""
        if "components" not in self._cache:
            self._cache["components"] = connected_components(
                self.adjacency(), directed=True, connection="weak")
        return self._cache["components"]

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return (self.n == other.n and np.array_equal(self.indptr, other.indptr)
                and np.array_equal(self.indices, other.indices))

    __hash__ = object.__hash__


def max_degrees(g: Graph) -> tuple[int, int]:
    """Return ``(d_in, d_out)``, both counting self-loops."""
    d_in = int(g.in_degree.max())
    d_out = int(np.bincount(g.indices, minlength=g.n).max())
    return d_in, d_out


def neighbor_subsets(g: Graph, i: int, beta: int) -> list[tuple[int, ...]]:
    """All subsets of ``N_i`` of size at most ``beta``, ordered by size then lexicographically."""
    if beta < 1:
        raise ValueError("beta must be positive")
    nb = [int(j) for j in g.neighbors(i)]
    out: list[tuple[int, ...]] = []
    for k in range(min(beta, len(nb)) + 1):
        out.extend(itertools.combinations(nb, k))
    return out


@lru_cache(maxsize=None)
def local_patterns(degree: int, beta: int) -> tuple[tuple[int, ...], ...]:
    """Subsets of ``range(degree)`` in canonical order; shared by all units of that degree."""
    return tuple(s for k in range(min(beta, degree) + 1)
                 for s in itertools.combinations(range(degree), k))


@dataclass(frozen=True)
class SubsetTable:
    """Flat listing of every pair ``(i, S)`` with ``S`` in the β-subsets of ``N_i``.

    Rows of unit ``i`` occupy ``offsets[i]:offsets[i+1]`` in canonical order.
    ``members`` is padded with ``-1`` and ``local`` holds positions within ``N_i``.
    """

    beta: int
    unit: np.ndarray
    members: np.ndarray
    local: np.ndarray
    size: np.ndarray
    offsets: np.ndarray
    degree: np.ndarray


def subset_table(g: Graph, beta: int) -> SubsetTable:
    key = ("subsets", beta)
    if key in g._cache:
        return g._cache[key]
    if beta < 1:
        raise ValueError("beta must be positive")
    deg = g.in_degree
    counts = np.array([len(local_patterns(int(d), beta)) for d in range(deg.max() + 1)])
    per_unit = counts[deg]
    offsets = np.concatenate([[0], np.cumsum(per_unit)]).astype(np.int64)
    total = int(offsets[-1])
    unit = np.repeat(np.arange(g.n, dtype=np.int64), per_unit)
    members = np.full((total, beta), -1, dtype=np.int64)
    local = np.full((total, beta), -1, dtype=np.int64)
    size = np.zeros(total, dtype=np.int64)
    for d in np.unique(deg):
        d = int(d)
        pats = local_patterns(d, beta)
        pat = np.full((len(pats), beta), -1, dtype=np.int64)
        for r, s in enumerate(pats):
            pat[r, :len(s)] = s
        units = np.flatnonzero(deg == d)
        nb = g.indices[g.indptr[units][:, None] + np.arange(d)]
        rows = offsets[units][:, None] + np.arange(len(pats))
        members[rows] = np.where(pat[None] >= 0, nb[:, np.maximum(pat, 0)], -1)
        local[rows] = pat[None]
        size[rows] = (pat >= 0).sum(1)[None]
    table = SubsetTable(beta, unit, members, local, size, offsets, deg)
    for arr in (unit, members, local, size, offsets):
        arr.setflags(write=False)
    g._cache[key] = table
    return table


def gen_erdos_renyi(n: int, p_edge: float, rng: np.random.Generator) -> Graph:
    """Directed G(n, p): every ordered pair ``j != i`` is an edge independently.

    The edge count is drawn first and a uniform subset of pair ids chosen, which
    has the same law as independent coins but never materializes an n x n array.
    """
    if not 0.0 <= p_edge <= 1.0:
        raise GraphError(f"p_edge must lie in [0, 1], got {p_edge}")
    n = int(n)
    pairs = n * (n - 1)
    m = int(rng.binomial(pairs, p_edge)) if pairs else 0
    ids = rng.choice(pairs, size=m, replace=False) if m else np.empty(0, dtype=np.int64)
    dst, k = np.divmod(ids, n - 1) if n > 1 else (ids, ids)
    src = k + (k >= dst)
    return Graph.from_edges(n, src, dst)


def max_pairwise_distance(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] <= 2000:
        return float(cdist(x, x).max())
    pts = x
    if x.shape[1] >= 2:
        try:
            pts = x[ConvexHull(x).vertices]
        except QhullError:
            pts = x
    if pts.shape[0] <= 4000:
        return float(cdist(pts, pts).max())
    best = 0.0
    for lo in range(0, pts.shape[0], 1000):
        best = max(best, float(cdist(pts[lo:lo + 1000], pts).max()))
    return best


def soft_rgg_probabilities(x_true: np.ndarray, sigma: float) -> np.ndarray:
    """Dense edge-probability matrix ``exp(-d_ij / sigma)`` on max-normalized distances."""
    x = np.asarray(x_true, dtype=np.float64)
    d = cdist(x, x)
    dmax = d.max()
    if dmax <= 0:
        raise GraphError("all covariate rows coincide; distances are degenerate")
    prob = np.exp(-d / dmax / sigma)
    np.fill_diagonal(prob, 1.0)
    return prob


def gen_soft_rgg(x_true: np.ndarray, sigma: float, rng: np.random.Generator,
                 cutoff: float = 4.0) -> Graph:
    """Soft random geometric graph on the rows of ``x_true``.

    Each ordered pair is an edge with probability ``exp(-d/sigma)`` where ``d``
    is the distance divided by the largest pairwise distance. Pairs closer than
    ``cutoff * sigma`` are sampled directly; farther pairs are proposed at the
    bounding rate ``exp(-cutoff)`` and thinned, which is exact and avoids
    touching all n^2 pairs.
    """
    if sigma <= 0:
        raise GraphError("sigma must be positive")
    x = np.asarray(x_true, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    if n < 2:
        raise GraphError("soft RGG needs at least two units")
    dmax = max_pairwise_distance(x)
    if dmax <= 0:
        raise GraphError("all covariate rows coincide; distances are degenerate")

    radius = cutoff * sigma * dmax
    near = cKDTree(x).query_pairs(radius, output_type="ndarray")
    # both orientations, sorted so the draw order does not depend on tree internals
    key = np.concatenate([near[:, 0] * n + near[:, 1], near[:, 1] * n + near[:, 0]]) \
        if near.size else np.empty(0, np.int64)
    key.sort()
    near = np.stack(np.divmod(key, n), axis=1)
    dn = np.linalg.norm(x[near[:, 0]] - x[near[:, 1]], axis=1) / dmax
    keep_near = rng.random(near.shape[0]) < np.exp(-dn / sigma)

    bound = np.exp(-cutoff)
    pairs = n * (n - 1)
    m = int(rng.binomial(pairs, bound))
    ids = np.sort(rng.choice(pairs, size=m, replace=False)) if m else np.empty(0, np.int64)
    a, k = np.divmod(ids, n - 1)
    b = k + (k >= a)
    dist = np.linalg.norm(x[a] - x[b], axis=1)
    df = dist / dmax
    far = dist > radius  # near pairs were already handled above
    accept = rng.random(m) < np.exp(-df / sigma) / bound
    keep_far = far & accept

    src = np.concatenate([near[keep_near, 1], b[keep_far]])
    dst = np.concatenate([near[keep_near, 0], a[keep_far]])
    return Graph.from_edges(n, src, dst)


def write_graph(g: Graph, path) -> None:
    lines = [f"n {g.n}"]
    for i in range(g.n):
        lines.extend(f"{j} {i}" for j in g.neighbors(i) if j != i)
    Path(path).write_text("\n".join(lines) + "\n")


def read_graph(path) -> Graph:
    """Parse ``n <N>`` followed by ``j i`` lines meaning ``j in N_i``."""
    rows = [ln.split("#", 1)[0].strip() for ln in Path(path).read_text().splitlines()]
    rows = [r for r in rows if r]
    if not rows or not rows[0].startswith("n "):
        raise GraphError(f"{path}: first line must be 'n <N>'")
    try:
        n = int(rows[0].split()[1])
        edges = np.array([[int(t) for t in r.split()] for r in rows[1:]], dtype=np.int64)
    except (ValueError, IndexError) as exc:
        raise GraphError(f"{path}: {exc}") from None
    if edges.size == 0:
        return Graph.self_loops(n)
    if edges.ndim != 2 or edges.shape[1] != 2:
        raise GraphError(f"{path}: edge lines need exactly two integers")
    return Graph.from_edges(n, edges[:, 0], edges[:, 1])
