"""Slow, independent reference implementations used by the tests."""

import itertools

import numpy as np


def distinct_assignments(labels):
    return sorted(set(itertools.permutations(labels)))


def direct_graph_term(g, labels, kmat):
    total = 0.0
    for i in range(g.n):
        nb = g.out_neighbors(i)
        total += sum(kmat[labels[i], labels[j]] for j in nb) / len(nb)
    return total / g.n


def direct_eta(g, labels, kmat):
    n = len(labels)
    cross = sum(kmat[labels[i], labels[j]] for i in range(n) for j in range(n) if i != j) / (n * (n - 1))
    diag = sum(kmat[l, l] for l in labels) / n
    return (direct_graph_term(g, labels, kmat) - cross) / (diag - cross)


def enumerate_variance(g, labels, kmat):
    """Mean and variance of eta_hat over all distinct relabelings."""
    vals = np.array([direct_eta(g, list(p), kmat) for p in distinct_assignments(list(labels))])
    return vals.mean(), vals.var()


def knn_tie_rule(x, k, seed):
    """k-NN rows by the documented rule, looped per vertex.

    Squared Euclidean distance; all strictly closer than the k-th smallest,
    the rest drawn from the tied set with ``default_rng([seed, 0, i])``.
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    rows = []
    for i in range(n):
        d = [float(np.sum((x[j] - x[i]) ** 2)) if j != i else np.inf for j in range(n)]
        r = sorted(d)[k - 1]
        closer = [j for j in range(n) if d[j] < r]
        tied = [j for j in range(n) if d[j] == r]
        need = k - len(closer)
        if need < len(tied):
            tied = list(np.random.default_rng([seed, 0, i]).choice(tied, size=need, replace=False))
        rows.append(sorted(closer + [int(t) for t in tied]))
    return rows


def mst_weight(dist):
    from scipy.sparse.csgraph import minimum_spanning_tree

    return float(minimum_spanning_tree(np.asarray(dist)).sum())
