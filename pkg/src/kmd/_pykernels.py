"""Numpy implementations of the hot loops.

Same signatures as the compiled ``_ckernels`` module; used when the
extension is not built or when ``KMD_PURE_PYTHON`` is set.
"""

import numpy as np

NAME = "python"


def _sources(indptr):
    n = indptr.shape[0] - 1
    return np.repeat(np.arange(n), np.diff(indptr))


def graph_term(indptr, indices, labels, kmat):
    """Sum over vertices of the mean kernel value along out-arcs."""
    src = _sources(indptr)
    inv_deg = 1.0 / np.diff(indptr)
    vals = kmat[labels[src], labels[indices]] * inv_deg[src]
    return float(vals.sum())


def graph_terms_batch(indptr, indices, label_matrix, kmat):
    """:func:`graph_term` for each row of ``label_matrix``."""
    src = _sources(indptr)
    weights = (1.0 / np.diff(indptr))[src]
    out = np.empty(label_matrix.shape[0])
    for b, labels in enumerate(label_matrix):
        out[b] = np.dot(kmat[labels[src], labels[indices]], weights)
    return out


def graph_moments(indptr, indices):
    """Return ``(sum 1/d_i, sum_v S_v, mutual-arc sum)``.

    ``S_v = (sum_u 1/d_u)^2 - sum_u 1/d_u^2`` over in-neighbors ``u`` of
    ``v``; the mutual-arc sum is ``sum 1/(d_i d_j)`` over ordered pairs with
    both arcs present. Rows of ``indices`` must be sorted.
    """
    n = indptr.shape[0] - 1
    deg = np.diff(indptr).astype(float)
    inv = 1.0 / deg
    src = _sources(indptr)
    s1 = np.bincount(indices, weights=inv[src], minlength=n)
    s2 = np.bincount(indices, weights=inv[src] ** 2, minlength=n)
    s_sum = float(np.sum(s1 * s1 - s2))
    # arc (i, j) is mutual iff (j, i) is also an arc
    keys = src.astype(np.int64) * n + indices
    rev = indices.astype(np.int64) * n + src
    mutual = np.isin(rev, keys, assume_unique=True)
    g3_sum = float(np.sum(inv[src[mutual]] * inv[indices[mutual]]))
    return float(inv.sum()), s_sum, g3_sum


def prim_mst(dist):
    """Parent array of a minimum spanning tree rooted at vertex 0."""
    n = dist.shape[0]
    parent = np.full(n, -1, dtype=np.int64)
    in_tree = np.zeros(n, dtype=bool)
    best = np.full(n, np.inf)
    best_from = np.full(n, -1, dtype=np.int64)
    cur = 0
    for _ in range(n - 1):
        in_tree[cur] = True
        row = dist[cur]
        upd = (~in_tree) & (row < best)
        best[upd] = row[upd]
        best_from[upd] = cur
        cand = np.where(in_tree, np.inf, best)
        nxt = int(np.argmin(cand))
        parent[nxt] = best_from[nxt]
        cur = nxt
    return parent


def knn_origin_counts(points, n_cand, k):
    """In-neighbor indicator of the origin for each candidate point.

    ``points`` holds the origin in row 0 followed by the window points
    sorted by norm. For candidate ``c`` in ``1..n_cand-1`` the result is 1
    when fewer than ``k`` other non-origin points are strictly closer to
    ``c`` than the origin, i.e. when ``c`` points to the origin in the
    directed k-NN graph.
    """
    out = np.zeros(n_cand, dtype=np.int64)
    sq_norm = np.einsum("ij,ij->i", points, points)
    for c in range(1, n_cand):
        r2 = sq_norm[c]
        # points with |x| > 2|c| cannot be closer to c than the origin
        stop = np.searchsorted(sq_norm, 4.0 * r2, side="right")
        diff = points[1:stop] - points[c]
        d2 = np.einsum("ij,ij->i", diff, diff)
        closer = int(np.count_nonzero(d2 < r2)) - 1  # c itself has d2 = 0
        out[c] = closer < k
    return out
