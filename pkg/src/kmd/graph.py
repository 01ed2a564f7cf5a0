"""Geometric graphs on a pooled sample and their degree functionals.

All graphs are stored as sorted CSR out-adjacency (``indptr``, ``indices``).
Undirected graphs (undirected k-NN, MST) keep both arcs of every edge, so
one code path over out-arcs serves every graph kind.

Tie-breaking rule for k-NN: for vertex ``i`` let ``r`` be the k-th smallest
distance to the other vertices. Every vertex strictly closer than ``r`` is a
neighbor; the remaining slots are filled by drawing without replacement from
the vertices at distance exactly ``r`` (in increasing index order) with
``numpy.random.default_rng([seed, 0, i]).choice``. In Euclidean mode the
distance compared is the squared Euclidean distance computed as the sum of
squared coordinate differences.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from ._backend import impl
from .errors import InvalidK, InvalidMetric, ShapeError

log = logging.getLogger(__name__)

#: Euclidean dimension above which k-d trees are skipped for brute force
BRUTE_FORCE_DIM = 30
#: tie-breaking stream tag, see the module docstring
TIE_STREAM = 0
DISTANCE_ATOL = 1e-9

# upper bounds on kissing numbers for d = 1..8
_KISSING_UPPER = {1: 2, 2: 6, 3: 12, 4: 24, 5: 44, 6: 78, 7: 134, 8: 240}


@dataclass(frozen=True)
class PointSet:
    """Pooled observations as Euclidean coordinates or a distance matrix."""

    coords: np.ndarray | None = None
    distances: np.ndarray | None = None

    @classmethod
    def euclidean(cls, x) -> "PointSet":
        x = np.array(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2:
            raise ShapeError(f"coordinates must be 2-d, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            bad = np.nonzero(~np.all(np.isfinite(x), axis=1))[0]
            raise InvalidMetric(f"non-finite coordinates in rows {bad[:10].tolist()}")
        return cls(coords=np.ascontiguousarray(x))

    @classmethod
    def from_distances(cls, dist, atol: float = DISTANCE_ATOL) -> "PointSet":
        """Validate a distance matrix and symmetrize it.

        Requires a square, finite, nonnegative matrix whose diagonal is zero
        and which is symmetric to within ``atol``.
        """
        d = np.array(dist, dtype=float)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise InvalidMetric(f"distance matrix must be square, got {d.shape}")
        if not np.all(np.isfinite(d)):
            raise InvalidMetric("distance matrix has non-finite entries")
        if np.any(d < 0):
            raise InvalidMetric("distance matrix has negative entries")
        if np.any(np.abs(np.diag(d)) > atol):
            raise InvalidMetric("distance matrix has nonzero diagonal")
        asym = np.abs(d - d.T)
        if np.any(asym > atol):
            i, j = np.unravel_index(np.argmax(asym), asym.shape)
            raise InvalidMetric(
                f"distance matrix is not symmetric: D[{i},{j}]={d[i, j]} vs D[{j},{i}]={d[j, i]}"
            )
        d = 0.5 * (d + d.T)
        np.fill_diagonal(d, 0.0)
        return cls(distances=np.ascontiguousarray(d))

    @property
    def n(self) -> int:
        src = self.coords if self.coords is not None else self.distances
        return src.shape[0]

    @property
    def is_euclidean(self) -> bool:
        return self.coords is not None

    @property
    def dim(self) -> int | None:
        return self.coords.shape[1] if self.coords is not None else None

    def dense_distances(self) -> np.ndarray:
        if self.distances is not None:
            return self.distances
        x = self.coords
        sq = np.einsum("ij,ij->i", x, x)
        d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
        np.maximum(d2, 0.0, out=d2)
        np.fill_diagonal(d2, 0.0)
        return np.sqrt(d2)

    def row_distances(self, i: int) -> np.ndarray:
        """Canonical distances from vertex ``i`` (squared in Euclidean mode)."""
        if self.distances is not None:
            return self.distances[i].copy()
        diff = self.coords - self.coords[i]
        return np.einsum("ij,ij->i", diff, diff)


@dataclass(frozen=True)
class DirectedGeometricGraph:
    """Out-adjacency of a geometric graph in CSR form with sorted rows."""

    indptr: np.ndarray
    indices: np.ndarray
    kind: str
    k: int | None = None

    @property
    def n(self) -> int:
        return self.indptr.shape[0] - 1

    @property
    def out_degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def out_neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    def arcs(self) -> tuple[np.ndarray, np.ndarray]:
        src = np.repeat(np.arange(self.n), self.out_degrees)
        return src, self.indices

    def in_degrees(self) -> np.ndarray:
        return np.bincount(self.indices, minlength=self.n)

    def total_degrees(self) -> np.ndarray:
        """Number of distinct vertices joined to each vertex by an arc."""
        src, dst = self.arcs()
        a = np.minimum(src, dst).astype(np.int64)
        b = np.maximum(src, dst).astype(np.int64)
        pairs = np.unique(a * self.n + b)
        ends = np.concatenate([pairs // self.n, pairs % self.n])
        return np.bincount(ends, minlength=self.n)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "k": self.k,
            "n": self.n,
            "out_neighbors": [self.out_neighbors(i).tolist() for i in range(self.n)],
        }


@dataclass(frozen=True)
class GraphStats:
    g1_tilde: float
    g2_tilde: float
    g3_tilde: float


def _from_arcs(n, src, dst, kind, k=None) -> DirectedGeometricGraph:
    key = np.unique(src.astype(np.int64) * n + dst.astype(np.int64))
    src, dst = key // n, key % n
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=n), out=indptr[1:])
    return DirectedGeometricGraph(indptr, np.ascontiguousarray(dst, dtype=np.int64), kind, k)


def _from_rows(rows: np.ndarray, kind: str, k: int) -> DirectedGeometricGraph:
    rows = np.sort(rows, axis=1).astype(np.int64)
    n = rows.shape[0]
    indptr = np.arange(0, n * k + 1, k, dtype=np.int64)
    return DirectedGeometricGraph(indptr, np.ascontiguousarray(rows.ravel()), kind, k)


def select_row(dist: np.ndarray, i: int, k: int, seed: int) -> np.ndarray:
    """Out-neighbors of vertex ``i`` given its canonical distance row."""
    d = dist.astype(float, copy=True)
    d[i] = np.inf
    r = np.partition(d, k - 1)[k - 1]
    closer = np.flatnonzero(d < r)
    tied = np.flatnonzero(d == r)
    need = k - closer.size
    if need < tied.size:
        rng = np.random.default_rng([seed, TIE_STREAM, i])
        tied = rng.choice(tied, size=need, replace=False)
    return np.sort(np.concatenate([closer, tied]))


def _knn_rows_dense(points: PointSet, k: int, seed: int) -> np.ndarray:
    n = points.n
    rows = np.empty((n, k), dtype=np.int64)
    if points.distances is not None:
        blocks = [(0, n)]
    else:
        step = max(1, int(2e7 // max(1, n * points.dim)))
        blocks = [(s, min(n, s + step)) for s in range(0, n, step)]
    for lo, hi in blocks:
        if points.distances is not None:
            d = points.distances.copy()
        else:
            x = points.coords
            diff = x[lo:hi, None, :] - x[None, :, :]
            d = np.einsum("ijk,ijk->ij", diff, diff)
        d[np.arange(hi - lo), np.arange(lo, hi)] = np.inf
        r = np.partition(d, k - 1, axis=1)[:, k - 1]
        within = d <= r[:, None]
        clean = np.count_nonzero(within, axis=1) == k
        _, cc = np.nonzero(within & clean[:, None])
        rows[lo + np.flatnonzero(clean)] = cc.reshape(-1, k)
        for t in np.flatnonzero(~clean):
            rows[lo + t] = select_row(d[t], lo + t, k, seed)
    return rows


def _knn_rows_tree(points: PointSet, k: int, seed: int) -> np.ndarray:
    x = points.coords
    n = x.shape[0]
    # query in leaf order of a cheap tree for memory locality, map back after
    order = cKDTree(x, leafsize=16, balanced_tree=False, compact_nodes=False).indices
    y = np.ascontiguousarray(x[order])
    dist, idx = cKDTree(y, balanced_tree=True, compact_nodes=True).query(y, k=k + 2)
    inv = np.empty(n, dtype=np.int64)
    inv[order] = np.arange(n)
    dist, idx = dist[inv], order[idx[inv]]
    own = idx == np.arange(n)[:, None]
    has_self = own.any(axis=1)
    # drop self when present, otherwise the farthest candidate
    drop = np.where(has_self, np.argmax(own, axis=1), k + 1)
    keep = np.ones_like(own)
    keep[np.arange(n), drop] = False
    cand_d = dist[keep].reshape(n, k + 1)
    cand_i = idx[keep].reshape(n, k + 1)
    gap = cand_d[:, k] - cand_d[:, k - 1]
    suspect = (~has_self) | (gap <= 1e-9 * cand_d[:, k])
    rows = cand_i[:, :k].copy()
    for i in np.flatnonzero(suspect):
        rows[i] = select_row(points.row_distances(i), i, k, seed)
    return rows


def build_knn(points: PointSet, k: int, directed: bool = True, seed: int = 0) -> DirectedGeometricGraph:
    """k-nearest-neighbor graph.

    Parameters
    ----------
    points : PointSet
        Euclidean coordinates or a validated distance matrix.
    k : int
        Neighbors per vertex, ``1 <= k <= n - 1``.
    directed : bool
        If False, arcs are symmetrized and deduplicated.
    seed : int
        Seed of the tie-breaking streams (see module docstring).

    Returns
    -------
    DirectedGeometricGraph
        Euclidean data with ``d <= 30`` is indexed by a median-split k-d tree;
        higher dimensions and distance matrices use exact per-row selection.
    """
    n = points.n
    if n < 2:
        raise InvalidK(f"need at least 2 points, got {n}")
    if int(k) != k or not 1 <= k <= n - 1:
        raise InvalidK(f"k must be in [1, n-1] = [1, {n - 1}], got {k}")
    k = int(k)
    if k == n - 1:
        all_idx = np.arange(n)
        rows = np.stack([np.delete(all_idx, i) for i in range(n)])
    elif points.is_euclidean and points.dim <= BRUTE_FORCE_DIM:
        rows = _knn_rows_tree(points, k, seed)
    else:
        rows = _knn_rows_dense(points, k, seed)
    if directed:
        return _from_rows(rows, "knn_directed", k)
    src = np.repeat(np.arange(n), k)
    dst = rows.ravel()
    return _from_arcs(n, np.concatenate([src, dst]), np.concatenate([dst, src]), "knn_undirected", k)


def build_mst(points: PointSet) -> DirectedGeometricGraph:
    """Euclidean or metric minimum spanning tree by Prim's algorithm, O(n^2).

    Ties between equal edge weights go to the lowest vertex index.
    """
    n = points.n
    if n < 2:
        raise InvalidK(f"need at least 2 points, got {n}")
    dist = np.ascontiguousarray(points.dense_distances(), dtype=float)
    parent = impl.prim_mst(dist)
    child = np.flatnonzero(parent >= 0)
    par = parent[child]
    return _from_arcs(n, np.concatenate([child, par]), np.concatenate([par, child]), "mst")


def build_graph(points: PointSet, kind: str, k: int | None = None, seed: int = 0) -> DirectedGeometricGraph:
    """Dispatch on the CLI graph names ``knn``, ``knn-undirected``, ``mst``."""
    if kind in ("knn", "knn_directed"):
        return build_knn(points, k, directed=True, seed=seed)
    if kind in ("knn-undirected", "knn_undirected"):
        return build_knn(points, k, directed=False, seed=seed)
    if kind == "mst":
        return build_mst(points)
    raise ValueError(f"unknown graph kind {kind!r}")


def graph_stats(g: DirectedGeometricGraph) -> GraphStats:
    """Degree functionals entering the exact permutation variance.

    ``g1 = mean(1/d_i)``; ``g2 = g1 + (1/n) sum_v S_v`` with ``S_v`` the
    in-neighbor sum over pairs, computed in O(kn); ``g3`` sums ``1/(d_i d_j)``
    over ordered mutual pairs, divided by ``n``.
    """
    if np.any(g.out_degrees < 1):
        raise InvalidK("every vertex needs at least one out-neighbor")
    g1, s_sum, g3 = impl.graph_moments(g.indptr, g.indices)
    n = g.n
    return GraphStats(g1 / n, (g1 + s_sum) / n, g3 / n)


def kissing_bound(d: int) -> int:
    """Upper bound on the kissing number in dimension ``d``."""
    return _KISSING_UPPER.get(d, 3 ** d - 1 if d < 20 else 2 ** 63)


def degree_diagnostic(g: DirectedGeometricGraph, dim: int | None = None) -> dict:
    """Compare the maximum total degree with a bound on well-behaved graphs.

    For Euclidean k-NN graphs the bound is ``k * c_d`` with ``c_d`` a
    kissing-number bound; without a dimension (distance-matrix mode, MST)
    it is ``4 * mean out-degree * log(n)``. Exceeding it logs a warning.
    """
    tot = g.total_degrees()
    max_deg = int(tot.max())
    if dim is not None and g.k is not None:
        bound = float(g.k * kissing_bound(dim)) + g.k
    else:
        bound = 4.0 * float(g.out_degrees.mean()) * max(1.0, math.log(g.n))
    flagged = max_deg > bound
    if flagged:
        log.warning("max total degree %d exceeds %.1f; variance approximation may be poor", max_deg, bound)
    return {"max_total_degree": max_deg, "degree_bound": bound, "degree_flag": bool(flagged)}
