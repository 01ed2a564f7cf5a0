"""Distribution-free null constants by Poisson-process Monte Carlo.

The limits of the graph functionals are expectations of degree functionals
at the origin of the graph built on a unit-intensity Poisson process with
the origin added. Each replicate samples the process in a ball around the
origin and evaluates the functionals there.

Window sizing: let ``mu`` be the smallest Poisson mean with
``P(Poisson(mu) <= k) <= tol`` and ``r`` the radius of a ball holding ``mu``
expected points. Any point farther than ``r`` from the origin points to the
origin, and any point within ``r`` has its k-NN ball inside the window of
radius ``2 r``, except with probability of order ``tol``. Graph kinds whose
functionals are not determined by k-NN balls (undirected k-NN, MST) use a
window twice as large and build the whole graph on it.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import gammaln
from scipy.stats import poisson

from ._backend import impl
from .errors import InconsistencyError, ShapeError
from .graph import PointSet, build_graph, graph_stats
from .kernels import LabelKernel

MC_STREAM = 2
DEFAULT_TOL = 1e-8


def abc_limits(kernel: LabelKernel, pi) -> tuple[float, float, float]:
    """Limits of the kernel moments under mixing proportions ``pi``."""
    pi = np.asarray(pi, dtype=float)
    if pi.shape != (kernel.m,):
        raise ShapeError(f"pi has shape {pi.shape}, kernel has {kernel.m} classes")
    if np.any(pi <= 0) or abs(pi.sum() - 1) > 1e-12:
        raise ValueError("pi must be positive and sum to 1")
    kmat = kernel.matrix
    a = float(pi @ (kmat ** 2) @ pi)
    kp = kmat @ pi
    b = float(pi @ (kp * kp))
    c = float(pi @ kmat @ pi) ** 2
    return a, b, c


def sigma_sq(g: tuple[float, float, float], kernel: LabelKernel, pi) -> float:
    """Asymptotic null variance of ``sqrt(n) * eta_hat``.

    Parameters
    ----------
    g : tuple of float
        The graph constants ``(g1, g2, g3)``.
    """
    pi = np.asarray(pi, dtype=float)
    a, b, c = abc_limits(kernel, pi)
    g1, g2, g3 = g
    num = a * (g1 + g3) + b * (g2 - 2 * g1 - 2 * g3 - 1) + c * (g1 - g2 + g3 + 1)
    denom = float(pi @ np.diag(kernel.matrix) - pi @ kernel.matrix @ pi)
    if not denom > 0 or not num > 0:
        raise InconsistencyError(f"non-positive variance ({num:.3g} / {denom:.3g}^2)")
    return num / denom ** 2


def unit_ball_volume(d: int) -> float:
    return math.exp(0.5 * d * math.log(math.pi) - gammaln(0.5 * d + 1))


def window_radius(k: int, d: int, intensity: float = 1.0, tol: float = DEFAULT_TOL) -> float:
    """Inner radius ``r`` of the sampling window (see module docstring)."""
    mu = float(k + 1)
    while poisson.cdf(k, mu) > tol:
        mu *= 1.05
    return (mu / (intensity * unit_ball_volume(d))) ** (1.0 / d)


def _sample_ball(rng, radius, d, intensity):
    count = rng.poisson(intensity * unit_ball_volume(d) * radius ** d)
    direc = rng.standard_normal((count, d))
    direc /= np.linalg.norm(direc, axis=1, keepdims=True)
    pts = direc * (radius * rng.random(count) ** (1.0 / d))[:, None]
    order = np.argsort(np.einsum("ij,ij->i", pts, pts))
    return np.vstack([np.zeros((1, d)), pts[order]])


def _origin_knn_directed(pts, r_in, k):
    sq = np.einsum("ij,ij->i", pts, pts)
    n_cand = int(np.searchsorted(sq, r_in * r_in, side="right"))
    inward = impl.knn_origin_counts(np.ascontiguousarray(pts), n_cand, k)
    n_in = int(inward.sum())
    mutual = int(inward[1:min(k + 1, n_cand)].sum())
    inv = 1.0 / k
    return inv, inv + n_in * (n_in - 1) * inv * inv, mutual * inv * inv


def _origin_from_graph(pts, kind, k):
    g = build_graph(PointSet.euclidean(pts), kind, k=k)
    deg = g.out_degrees.astype(float)
    nb = g.out_neighbors(0)
    inv_nb = 1.0 / deg[nb]
    g1 = 1.0 / deg[0]
    g2 = g1 + inv_nb.sum() ** 2 - np.sum(inv_nb ** 2)
    g3 = g1 * inv_nb.sum()
    return g1, float(g2), float(g3)


@dataclass
class NullConstants:
    kind: str
    k: int | None
    d: int
    g1: float
    g2: float
    g3: float
    se1: float
    se2: float
    se3: float
    reps: int
    seed: int
    resampled: int
    window_radius: float
    intensity: float = 1.0
    a: float | None = None
    b: float | None = None
    c: float | None = None
    sigma_sq: float | None = None

    @property
    def g(self) -> tuple[float, float, float]:
        return self.g1, self.g2, self.g3

    def with_kernel(self, kernel: LabelKernel, pi) -> "NullConstants":
        a, b, c = abc_limits(kernel, pi)
        out = NullConstants(**asdict(self))
        out.a, out.b, out.c = a, b, c
        out.sigma_sq = sigma_sq(self.g, kernel, pi)
        return out

    def to_dict(self) -> dict:
        return asdict(self)


def mc_null_constants(
    kind: str = "knn",
    k: int = 1,
    d: int = 1,
    reps: int = 100_000,
    seed: int = 0,
    intensity: float = 1.0,
    window_scale: float = 1.0,
    tol: float = DEFAULT_TOL,
) -> NullConstants:
    """Monte Carlo estimates of ``(g1, g2, g3)`` with standard errors.

    Parameters
    ----------
    kind : {"knn", "knn-undirected", "mst"}
    k : int
        Neighbors for the k-NN kinds; ignored for ``mst`` sizing beyond 1.
    d : int
        Dimension.
    reps : int
        Replicates; replicate ``r`` draws from ``default_rng([seed, 2, r])``.
    intensity : float
        Process intensity; the constants do not depend on it.
    window_scale : float
        Multiplier on the window radius, for stabilization checks.
    """
    if reps < 1:
        raise ValueError("need at least one replicate")
    kk = k if kind != "mst" else 1
    r_in = window_radius(kk, d, intensity, tol) * window_scale
    directed = kind in ("knn", "knn_directed")
    radius = 2.0 * r_in if directed else 4.0 * r_in
    vals = np.empty((reps, 3))
    resampled = 0
    for r in range(reps):
        rng = np.random.default_rng([seed, MC_STREAM, r])
        while True:
            pts = _sample_ball(rng, radius, d, intensity)
            if pts.shape[0] > kk + 1:
                break
            resampled += 1
        vals[r] = _origin_knn_directed(pts, r_in, k) if directed else _origin_from_graph(pts, kind, k)
    mean = vals.mean(axis=0)
    se = vals.std(axis=0, ddof=1) / math.sqrt(reps) if reps > 1 else np.full(3, np.nan)
    return NullConstants(
        kind=kind, k=k if kind != "mst" else None, d=d,
        g1=float(mean[0]), g2=float(mean[1]), g3=float(mean[2]),
        se1=float(se[0]), se2=float(se[1]), se3=float(se[2]),
        reps=reps, seed=seed, resampled=resampled, window_radius=radius, intensity=intensity,
    )


def cache_key(kind, k, d, reps, seed) -> str:
    return f"{kind}|k={k}|d={d}|R={reps}|seed={seed}"


def cached_null_constants(path: str, kind: str, k: int, d: int, reps: int, seed: int) -> NullConstants:
    """:func:`mc_null_constants` memoized in a JSON file."""
    key = cache_key(kind, k, d, reps, seed)
    cache = {}
    if os.path.exists(path):
        with open(path, encoding="utf-8") as fh:
            cache = json.load(fh)
    if key in cache:
        return NullConstants(**cache[key])
    res = mc_null_constants(kind, k, d, reps, seed)
    cache[key] = res.to_dict()
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(cache, fh, indent=2, sort_keys=True)
    return res


def compare_gtilde_convergence(d: int, k: int, n_grid, reps: int, seed: int = 0, reference: NullConstants | None = None) -> list[dict]:
    """Mean sample functionals on standard Gaussian null samples, per ``n``.

    Rows carry the Monte Carlo limits from ``reference`` when given.
    """
    rows = []
    for ci, n in enumerate(n_grid):
        vals = np.empty((reps, 3))
        for r in range(reps):
            rng = np.random.default_rng([seed, ci, r])
            g = build_graph(PointSet.euclidean(rng.standard_normal((n, d))), "knn", k=k)
            st = graph_stats(g)
            vals[r] = st.g1_tilde, st.g2_tilde, st.g3_tilde
        mean = vals.mean(axis=0)
        se = vals.std(axis=0, ddof=1) / math.sqrt(reps) if reps > 1 else np.full(3, np.nan)
        row = {
            "n": int(n), "d": d, "k": k, "reps": reps,
            "g1_tilde": float(mean[0]), "g2_tilde": float(mean[1]), "g3_tilde": float(mean[2]),
            "se_g3_tilde": float(se[2]),
        }
        if reference is not None:
            row.update(g1=reference.g1, g2=reference.g2, g3=reference.g3, se_g3=reference.se3)
            row["g3_gap"] = row["g3_tilde"] - reference.g3
        rows.append(row)
    return rows
