"""Sample KMD, its exact permutation variance, and the two tests.

The estimator is

    eta_hat = (graph_term - cross_term) / (diag_term - cross_term)

with ``graph_term = (1/n) sum_i (1/d_i) sum_{i->j} K(l_i, l_j)``,
``cross_term`` the mean of ``K`` over ordered pairs of distinct
observations and ``diag_term`` the mean of ``K(l_i, l_i)``. Only the graph
term depends on how labels sit on the graph, so permutations recompute that
term alone.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.stats import norm

from ._backend import impl
from .errors import (
    DegenerateDenominator,
    DegenerateTest,
    InconsistencyError,
    InvalidClassCount,
    SampleTooSmall,
    ShapeError,
)
from .graph import (
    DirectedGeometricGraph,
    GraphStats,
    PointSet,
    build_graph,
    degree_diagnostic,
    graph_stats,
)
from .kernels import LabelKernel, make_discrete

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
#: RNG stream tag for permutation replicates: ``default_rng([seed, 1, b])``
PERM_STREAM = 1
VARIANCE_CLAMP = 1e-12
_PERM_CHUNK = 64


def encode_labels(raw) -> tuple[np.ndarray, tuple]:
    """Map raw labels to codes ``0..M-1``.

    Integer labels forming exactly ``{1, ..., M}`` keep their meaning
    (label ``j`` gets code ``j - 1``); anything else is coded by order of
    first appearance. Returns the codes and the original label of each code.
    """
    raw = np.asarray(raw)
    uniq = list(dict.fromkeys(raw.tolist()))
    if all(isinstance(u, (int, np.integer)) for u in uniq):
        if sorted(uniq) == list(range(1, len(uniq) + 1)):
            return raw.astype(np.int64) - 1, tuple(range(1, len(uniq) + 1))
    lookup = {u: c for c, u in enumerate(uniq)}
    return np.array([lookup[v] for v in raw.tolist()], dtype=np.int64), tuple(uniq)


@dataclass(frozen=True)
class LabeledDataset:
    """Pooled sample with class codes ``0..M-1``; every class is present."""

    points: PointSet
    labels: np.ndarray
    classes: tuple = ()

    def __post_init__(self):
        labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "labels", labels)
        if labels.ndim != 1 or labels.size != self.points.n:
            raise ShapeError(f"{labels.size} labels for {self.points.n} observations")
        m = int(labels.max()) + 1 if labels.size else 0
        if labels.size and labels.min() < 0:
            raise InvalidClassCount("class codes must be nonnegative")
        if np.any(np.bincount(labels, minlength=m) == 0):
            raise InvalidClassCount("every class code 0..M-1 must appear")
        if m < 2:
            raise InvalidClassCount(f"need at least 2 classes, got {m}")
        if not self.classes:
            object.__setattr__(self, "classes", tuple(range(1, m + 1)))

    @classmethod
    def from_raw(cls, points: PointSet, raw_labels) -> "LabeledDataset":
        codes, classes = encode_labels(raw_labels)
        return cls(points, codes, classes)

    @property
    def n(self) -> int:
        return self.labels.size

    @property
    def m(self) -> int:
        return len(self.classes)

    @property
    def counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.m)

    @property
    def proportions(self) -> np.ndarray:
        return self.counts / self.n


class EtaEstimate(NamedTuple):
    eta_hat: float
    numerator: float
    denominator: float


def _check_labels(labels, kernel: LabelKernel, n: int):
    labels = np.ascontiguousarray(labels, dtype=np.int64)
    if labels.shape != (n,):
        raise ShapeError(f"expected {n} labels, got shape {labels.shape}")
    if labels.min() < 0 or labels.max() >= kernel.m:
        raise ShapeError(f"labels must lie in 0..{kernel.m - 1} for this kernel")
    return labels


def cross_sum(counts, kernel: LabelKernel) -> float:
    """``sum_{i != j} K(l_i, l_j)`` over ordered observation pairs, from class counts."""
    cnt = np.asarray(counts, dtype=float)
    kmat = kernel.matrix
    return float(cnt @ kmat @ cnt - cnt @ np.diag(kmat))


def eta_terms(counts, kernel: LabelKernel) -> tuple[float, float]:
    """Return ``(cross_term, denominator)``; both depend on counts only."""
    cnt = np.asarray(counts, dtype=float)
    n = cnt.sum()
    cross = cross_sum(cnt, kernel) / (n * (n - 1))
    denom = float(cnt @ np.diag(kernel.matrix)) / n - cross
    return cross, denom


def graph_term(g: DirectedGeometricGraph, labels, kernel: LabelKernel) -> float:
    return impl.graph_term(g.indptr, g.indices, labels, np.ascontiguousarray(kernel.matrix)) / g.n


def eta_hat(g: DirectedGeometricGraph, labels, kernel: LabelKernel) -> EtaEstimate:
    """Sample KMD on a fixed graph. Cost O(kn + M^2).

    Raises
    ------
    DegenerateDenominator
        When the denominator vanishes, e.g. a single class is present.
    """
    labels = _check_labels(labels, kernel, g.n)
    counts = np.bincount(labels, minlength=kernel.m)
    cross, denom = eta_terms(counts, kernel)
    scale = max(1.0, float(np.max(np.abs(kernel.matrix))))
    if denom <= 1e-12 * scale:
        raise DegenerateDenominator(
            f"denominator {denom:.3g} is not positive; need >= 2 classes and a characteristic kernel"
        )
    if np.all(g.out_degrees == g.n - 1):
        # complete graph: the graph term is the cross term, so report 0 exactly
        num = 0.0
    else:
        num = graph_term(g, labels, kernel) - cross
    return EtaEstimate(float(num / denom), float(num), float(denom))


def abc_tilde(counts, kernel: LabelKernel) -> tuple[float, float, float]:
    """Kernel moments over distinct index tuples, in closed form from counts.

    ``a`` averages ``K^2`` over ordered distinct pairs, ``b`` averages
    ``K(l_i, l_j) K(l_i, l_l)`` over distinct triples and ``c`` averages
    ``K(l_i, l_j) K(l_l, l_m)`` over distinct quadruples.
    """
    cnt = np.asarray(counts, dtype=float)
    n = cnt.sum()
    if n < 4:
        raise SampleTooSmall(f"need n >= 4 for the variance, got {n:g}")
    kmat = kernel.matrix
    diag = np.diag(kmat)
    a_sum = cnt @ (kmat ** 2) @ cnt - cnt @ diag ** 2
    kn = kmat @ cnt
    b_sum = cnt @ (kn * kn) + cnt @ diag ** 2 - 2.0 * (cnt * diag) @ kn - a_sum
    s = cnt @ kn - cnt @ diag
    c_sum = s * s - 4.0 * b_sum - 2.0 * a_sum
    a = a_sum / (n * (n - 1))
    b = b_sum / (n * (n - 1) * (n - 2))
    c = c_sum / (n * (n - 1) * (n - 2) * (n - 3))
    return float(a), float(b), float(c)


def perm_variance(stats: GraphStats, abc, n: int, denominator: float = 1.0) -> float:
    """Exact variance of ``eta_hat`` under uniform relabeling of a fixed sample.

    With ``denominator=1`` this is the variance of the numerator.
    """
    if n < 4:
        raise SampleTooSmall(f"need n >= 4 for the variance, got {n}")
    a, b, c = abc
    g1, g2, g3 = stats.g1_tilde, stats.g2_tilde, stats.g3_tilde
    r = 1.0 / (n - 1)
    v = (
        a * (g1 + g3 - 2.0 * r)
        + b * (g2 - 2.0 * g1 - 2.0 * g3 - 1.0 + 4.0 * r)
        + c * (g1 - g2 + g3 + (n - 3) * r)
    )
    scale = max(abs(a), abs(b), abs(c), 1e-300) * max(1.0, abs(g2))
    if v < -VARIANCE_CLAMP * scale:
        raise InconsistencyError(f"permutation variance came out negative ({v:.3g})")
    if abs(v) <= VARIANCE_CLAMP * scale:
        # rounding noise around an exactly zero variance
        return 0.0
    return v / (n * denominator ** 2)


def asymptotic_test(eta: float, variance: float) -> tuple[float, float]:
    """One-sided normal test; returns ``(z, 1 - Phi(z))``."""
    if not variance > 0:
        raise DegenerateTest("permutation variance is zero; the z-statistic is undefined")
    z = eta / np.sqrt(variance)
    return float(z), float(norm.sf(z))


def permutation_graph_terms(g: DirectedGeometricGraph, labels, kernel: LabelKernel, n_perms: int, seed: int) -> np.ndarray:
    """Graph term (already divided by ``n``) for ``n_perms`` label permutations.

    Replicate ``b`` permutes the labels with ``default_rng([seed, 1, b])``.
    """
    labels = _check_labels(labels, kernel, g.n)
    kmat = np.ascontiguousarray(kernel.matrix)
    out = np.empty(n_perms)
    for lo in range(0, n_perms, _PERM_CHUNK):
        hi = min(n_perms, lo + _PERM_CHUNK)
        block = np.empty((hi - lo, g.n), dtype=np.int64)
        for t, b in enumerate(range(lo, hi)):
            block[t] = np.random.default_rng([seed, PERM_STREAM, b]).permutation(labels)
        out[lo:hi] = impl.graph_terms_batch(g.indptr, g.indices, block, kmat)
    return out / g.n


def permutation_test(g: DirectedGeometricGraph, labels, kernel: LabelKernel, n_perms: int = 500, seed: int = 0) -> float:
    """Monte Carlo permutation p-value ``(1 + #{eta_b >= eta_obs}) / (1 + B)``.

    The graph, cross term and denominator are permutation invariant, so
    ``eta_b >= eta_obs`` reduces to comparing graph terms.
    """
    if n_perms < 1:
        raise ValueError("need at least one permutation")
    labels = _check_labels(labels, kernel, g.n)
    obs = graph_term(g, labels, kernel)
    null = permutation_graph_terms(g, labels, kernel, n_perms, seed)
    tol = 1e-12 * max(1.0, abs(obs))
    return float((1 + np.count_nonzero(null >= obs - tol)) / (1 + n_perms))


@dataclass
class TestConfig:
    """Settings for :func:`kmd_test`. ``k=None`` means ``max(1, round(0.1 n))``."""

    __test__ = False  # not a pytest class

    graph: str = "knn"
    k: int | None = None
    kernel: LabelKernel | None = None
    n_perms: int = 500
    seed: int = 0


@dataclass
class KmdReport:
    eta_hat: float
    numerator: float
    denominator: float
    a_tilde: float
    b_tilde: float
    c_tilde: float
    g_stats: GraphStats
    perm_variance: float
    z: float | None
    p_asymptotic: float | None
    p_permutation: float | None
    n_permutations: int
    seed: int
    n: int
    counts: list
    graph: str
    k: int | None
    diagnostics: dict = field(default_factory=dict)
    label_map: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {"schema_version": SCHEMA_VERSION}
        out.update(asdict(self))
        return out

    def summary_line(self) -> str:
        def fmt(v):
            return "nan" if v is None else f"{v:.6g}"

        return (
            f"eta_hat={self.eta_hat:.6g} z={fmt(self.z)} "
            f"p_asymptotic={fmt(self.p_asymptotic)} p_permutation={fmt(self.p_permutation)}"
        )


def default_k(n: int) -> int:
    return int(min(n - 1, max(1, round(0.1 * n))))


def kmd_test(data: LabeledDataset, config: TestConfig | None = None) -> KmdReport:
    """Build the graph, estimate KMD and run both tests. Deterministic given the seed."""
    cfg = config or TestConfig()
    kernel = cfg.kernel or make_discrete(data.m)
    if kernel.m != data.m:
        raise ShapeError(f"kernel has {kernel.m} classes, data has {data.m}")
    k = cfg.k if cfg.k is not None else default_k(data.n)
    g = build_graph(data.points, cfg.graph, k=k, seed=cfg.seed)
    stats = graph_stats(g)
    est = eta_hat(g, data.labels, kernel)
    abc = abc_tilde(data.counts, kernel)
    var = perm_variance(stats, abc, data.n, est.denominator)
    if var > 0:
        z, p_asym = asymptotic_test(est.eta_hat, var)
    else:
        log.warning("zero permutation variance; asymptotic test skipped")
        z = p_asym = None
    p_perm = permutation_test(g, data.labels, kernel, cfg.n_perms, cfg.seed) if cfg.n_perms > 0 else None
    diag = degree_diagnostic(g, data.points.dim if g.kind != "mst" else None)
    return KmdReport(
        eta_hat=est.eta_hat,
        numerator=est.numerator,
        denominator=est.denominator,
        a_tilde=abc[0],
        b_tilde=abc[1],
        c_tilde=abc[2],
        g_stats=stats,
        perm_variance=var,
        z=z,
        p_asymptotic=p_asym,
        p_permutation=p_perm,
        n_permutations=cfg.n_perms,
        seed=cfg.seed,
        n=data.n,
        counts=data.counts.tolist(),
        graph=cfg.graph,
        k=g.k,
        diagnostics=diag,
        label_map={str(c): code for code, c in enumerate(data.classes)},
    )
