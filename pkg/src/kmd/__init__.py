"""Kernel measure of multi-sample dissimilarity (KMD).

Graph-based estimation of a kernel measure of how far ``M`` distributions
are from being equal, with an exact permutation variance, an asymptotic
test and a permutation test.
"""

from ._backend import BACKEND
from .errors import KmdError
from .estimator import (
    KmdReport,
    LabeledDataset,
    TestConfig,
    abc_tilde,
    eta_hat,
    kmd_test,
    perm_variance,
    permutation_test,
)
from .graph import PointSet, build_graph, build_knn, build_mst, graph_stats
from .kernels import LabelKernel, from_matrix, make_discrete, make_weighted_discrete

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "KmdError",
    "KmdReport",
    "LabelKernel",
    "LabeledDataset",
    "PointSet",
    "TestConfig",
    "abc_tilde",
    "build_graph",
    "build_knn",
    "build_mst",
    "eta_hat",
    "from_matrix",
    "graph_stats",
    "kmd_test",
    "make_discrete",
    "make_weighted_discrete",
    "perm_variance",
    "permutation_test",
]
