# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops. See ``_pykernels`` for the reference semantics."""

import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()

NAME = "cython"

ctypedef cnp.int64_t i64


def graph_term(const i64[::1] indptr, const i64[::1] indices,
               const i64[::1] labels, const double[:, ::1] kmat):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t i, p
    cdef double total = 0.0, row
    with nogil:
        for i in range(n):
            row = 0.0
            for p in range(indptr[i], indptr[i + 1]):
                row += kmat[labels[i], labels[indices[p]]]
            total += row / (indptr[i + 1] - indptr[i])
    return total


def graph_terms_batch(const i64[::1] indptr, const i64[::1] indices,
                      const i64[:, ::1] label_matrix, const double[:, ::1] kmat):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t nb = label_matrix.shape[0]
    cdef Py_ssize_t b, i, p
    cdef double total, row
    out = np.empty(nb, dtype=np.float64)
    cdef double[::1] res = out
    with nogil:
        for b in range(nb):
            total = 0.0
            for i in range(n):
                row = 0.0
                for p in range(indptr[i], indptr[i + 1]):
                    row += kmat[label_matrix[b, i], label_matrix[b, indices[p]]]
                total += row / (indptr[i + 1] - indptr[i])
            res[b] = total
    return out


cdef bint _has_arc(const i64[::1] indptr, const i64[::1] indices,
                   i64 src, i64 dst) nogil:
    cdef i64 lo = indptr[src], hi = indptr[src + 1] - 1, mid
    while lo <= hi:
        mid = (lo + hi) >> 1
        if indices[mid] == dst:
            return True
        if indices[mid] < dst:
            lo = mid + 1
        else:
            hi = mid - 1
    return False


def graph_moments(const i64[::1] indptr, const i64[::1] indices):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t i, p
    cdef i64 j
    cdef double inv_i, g1 = 0.0, s_sum = 0.0, g3 = 0.0
    s1_arr = np.zeros(n, dtype=np.float64)
    s2_arr = np.zeros(n, dtype=np.float64)
    cdef double[::1] s1 = s1_arr
    cdef double[::1] s2 = s2_arr
    with nogil:
        for i in range(n):
            inv_i = 1.0 / (indptr[i + 1] - indptr[i])
            g1 += inv_i
            for p in range(indptr[i], indptr[i + 1]):
                j = indices[p]
                s1[j] += inv_i
                s2[j] += inv_i * inv_i
                if _has_arc(indptr, indices, j, i):
                    g3 += inv_i / (indptr[j + 1] - indptr[j])
        for i in range(n):
            s_sum += s1[i] * s1[i] - s2[i]
    return g1, s_sum, g3


def prim_mst(const double[:, ::1] dist):
    cdef Py_ssize_t n = dist.shape[0]
    cdef Py_ssize_t step, v, cur = 0, nxt
    cdef double bestval
    parent_arr = np.full(n, -1, dtype=np.int64)
    best_arr = np.full(n, INFINITY, dtype=np.float64)
    from_arr = np.full(n, -1, dtype=np.int64)
    in_arr = np.zeros(n, dtype=np.uint8)
    cdef i64[::1] parent = parent_arr
    cdef double[::1] best = best_arr
    cdef i64[::1] best_from = from_arr
    cdef unsigned char[::1] in_tree = in_arr
    with nogil:
        for step in range(n - 1):
            in_tree[cur] = 1
            nxt = -1
            bestval = INFINITY
            for v in range(n):
                if in_tree[v]:
                    continue
                if dist[cur, v] < best[v]:
                    best[v] = dist[cur, v]
                    best_from[v] = cur
                if nxt < 0 or best[v] < bestval:
                    bestval = best[v]
                    nxt = v
            parent[nxt] = best_from[nxt]
            cur = nxt
    return parent_arr


def knn_origin_counts(const double[:, ::1] points, Py_ssize_t n_cand, Py_ssize_t k):
    cdef Py_ssize_t npts = points.shape[0], dim = points.shape[1]
    cdef Py_ssize_t c, j, t, closer
    cdef double r2, d2, diff, nj
    out_arr = np.zeros(n_cand, dtype=np.int64)
    cdef i64[::1] out = out_arr
    norms_arr = np.einsum("ij,ij->i", np.asarray(points), np.asarray(points))
    cdef double[::1] sq_norm = norms_arr
    with nogil:
        for c in range(1, n_cand):
            r2 = sq_norm[c]
            closer = 0
            for j in range(1, npts):
                if sq_norm[j] > 4.0 * r2:
                    break
                if j == c:
                    continue
                d2 = 0.0
                for t in range(dim):
                    diff = points[j, t] - points[c, t]
                    d2 += diff * diff
                if d2 < r2:
                    closer += 1
                    if closer >= k:
                        break
            out[c] = closer < k
    return out_arr
