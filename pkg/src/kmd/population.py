"""Population KMD for validation.

Exact values on finite spaces, and one-dimensional two-sample values from
``eta = 1 - integral f g / (pi1 f + pi2 g)`` by adaptive Simpson quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InvalidChannel, InvalidDensity, InvalidModel, ShapeError
from .kernels import LabelKernel

GAUSS_TAIL_SD = 10.0


@dataclass(frozen=True)
class FiniteJointModel:
    """Per-class probability vectors on ``{0, ..., s-1}`` with mixing weights.

    ``probs`` has shape ``(M, s)``.
    """

    probs: np.ndarray
    pi: np.ndarray

    def __post_init__(self):
        p = np.array(self.probs, dtype=float)
        pi = np.array(self.pi, dtype=float)
        if p.ndim != 2 or pi.shape != (p.shape[0],):
            raise ShapeError(f"probs {p.shape} and pi {pi.shape} do not match")
        if np.any(p < 0) or np.any(np.abs(p.sum(axis=1) - 1.0) > 1e-12):
            raise InvalidModel("each class distribution must be a probability vector")
        if np.any(pi <= 0) or abs(pi.sum() - 1.0) > 1e-12:
            raise InvalidModel("mixing proportions must be positive and sum to 1")
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "pi", pi)

    @classmethod
    def uniform_pi(cls, probs) -> "FiniteJointModel":
        probs = np.asarray(probs, dtype=float)
        return cls(probs, np.full(probs.shape[0], 1.0 / probs.shape[0]))

    @property
    def support_size(self) -> int:
        return self.probs.shape[1]


def _kernel_constants(kmat, pi):
    cross = float(pi @ kmat @ pi)
    return cross, float(pi @ np.diag(kmat)) - cross


def eta_exact_finite(model: FiniteJointModel, kernel: LabelKernel) -> float:
    """KMD of a finite joint model by direct summation over the support.

    Support points with zero pooled mass are skipped.
    """
    if kernel.m != model.probs.shape[0]:
        raise ShapeError(f"kernel has {kernel.m} classes, model has {model.probs.shape[0]}")
    kmat = kernel.matrix
    weighted = model.pi[:, None] * model.probs  # pi_i p_i(z)
    pooled = weighted.sum(axis=0)
    live = pooled > 0
    w = weighted[:, live]
    first = float(np.sum(np.einsum("iz,ij,jz->z", w, kmat, w) / pooled[live]))
    cross, denom = _kernel_constants(kmat, model.pi)
    return (first - cross) / denom


def push_forward(model: FiniteJointModel, channel) -> FiniteJointModel:
    ch = np.asarray(channel, dtype=float)
    if ch.ndim != 2 or ch.shape[0] != model.support_size:
        raise ShapeError(f"channel shape {ch.shape} does not fit support size {model.support_size}")
    if np.any(ch < 0) or np.any(np.abs(ch.sum(axis=1) - 1.0) > 1e-12):
        raise InvalidChannel("channel rows must be probability vectors")
    out = model.probs @ ch
    out /= out.sum(axis=1, keepdims=True)
    return FiniteJointModel(out, model.pi)


def verify_dpi_finite(model: FiniteJointModel, channel, kernel: LabelKernel) -> tuple[float, float]:
    """KMD before and after passing every class through a Markov channel."""
    after = push_forward(model, channel)
    return eta_exact_finite(model, kernel), eta_exact_finite(after, kernel)


def verify_convexity_finite(model_p: FiniteJointModel, model_q: FiniteJointModel, lam: float, kernel: LabelKernel) -> bool:
    """Check joint convexity at one mixing weight ``lam``."""
    if model_p.probs.shape != model_q.probs.shape:
        raise ShapeError("models must share support and number of classes")
    if not np.allclose(model_p.pi, model_q.pi, rtol=0, atol=1e-15):
        raise ShapeError("models must share mixing proportions")
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lam must lie in [0, 1]")
    mix = FiniteJointModel(lam * model_p.probs + (1 - lam) * model_q.probs, model_p.pi)
    lhs = eta_exact_finite(mix, kernel)
    rhs = lam * eta_exact_finite(model_p, kernel) + (1 - lam) * eta_exact_finite(model_q, kernel)
    return lhs <= rhs + 1e-12


def adaptive_simpson(f: Callable[[float], float], a: float, b: float, tol: float = 1e-10, max_depth: int = 60) -> float:
    """Adaptive Simpson quadrature with Richardson correction.

    Intervals are refined until the local error estimate is below the share
    of ``tol`` proportional to their length.
    """
    if b <= a:
        return 0.0
    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    whole = (b - a) * (fa + 4 * fm + fb) / 6
    total = 0.0
    stack = [(a, b, fa, fm, fb, whole, tol, 0)]
    while stack:
        lo, hi, flo, fmid, fhi, est, eps, depth = stack.pop()
        mid = 0.5 * (lo + hi)
        lm, rm = 0.5 * (lo + mid), 0.5 * (mid + hi)
        flm, frm = f(lm), f(rm)
        left = (mid - lo) * (flo + 4 * flm + fmid) / 6
        right = (hi - mid) * (fmid + 4 * frm + fhi) / 6
        delta = left + right - est
        if depth >= max_depth or abs(delta) <= 15 * eps:
            total += left + right + delta / 15
        else:
            stack.append((lo, mid, flo, flm, fmid, left, eps / 2, depth + 1))
            stack.append((mid, hi, fmid, frm, fhi, right, eps / 2, depth + 1))
    return total


def _integrate(f, breaks, tol):
    pts = sorted(set(breaks))
    # start from several panels so narrow features are not missed
    total = 0.0
    for lo, hi in zip(pts[:-1], pts[1:]):
        edges = np.linspace(lo, hi, 17)
        for a, b in zip(edges[:-1], edges[1:]):
            total += adaptive_simpson(f, a, b, tol / (16 * max(1, len(pts) - 1)))
    return total


@dataclass(frozen=True)
class Density1D:
    """Density on ``[lo, hi]`` (zero outside), with optional interior kinks."""

    pdf: Callable[[float], float]
    lo: float
    hi: float
    breaks: tuple = ()

    def __call__(self, x: float) -> float:
        if x < self.lo or x > self.hi:
            return 0.0
        return float(self.pdf(x))

    def check_normalized(self, tol: float = 1e-6) -> None:
        mass = _integrate(self, [self.lo, self.hi, *self.breaks], 1e-10)
        if abs(mass - 1.0) > tol:
            raise InvalidDensity(f"density integrates to {mass:.8f} on [{self.lo}, {self.hi}]")

    @classmethod
    def uniform(cls, lo: float, hi: float) -> "Density1D":
        h = 1.0 / (hi - lo)
        return cls(lambda x: h, lo, hi)

    @classmethod
    def normal(cls, mean: float = 0.0, sd: float = 1.0) -> "Density1D":
        c = 1.0 / (sd * math.sqrt(2 * math.pi))
        return cls(
            lambda x: c * math.exp(-0.5 * ((x - mean) / sd) ** 2),
            mean - GAUSS_TAIL_SD * sd,
            mean + GAUSS_TAIL_SD * sd,
            (mean,),
        )

    def affine(self, scale: float, shift: float) -> "Density1D":
        """Density of ``scale * X + shift`` for ``X`` with this density."""
        pdf, s = self.pdf, abs(scale)
        ends = sorted([scale * self.lo + shift, scale * self.hi + shift])
        return Density1D(
            lambda y: pdf((y - shift) / scale) / s,
            ends[0],
            ends[1],
            tuple(scale * b + shift for b in self.breaks),
        )


def eta_two_sample_1d(f: Density1D, g: Density1D, pi1: float, tol: float = 1e-8) -> float:
    """Two-sample KMD with the discrete kernel for densities on the line."""
    if not 0.0 < pi1 < 1.0:
        raise ValueError("pi1 must lie in (0, 1)")
    f.check_normalized()
    g.check_normalized()
    pi2 = 1.0 - pi1
    lo, hi = max(f.lo, g.lo), min(f.hi, g.hi)
    if hi <= lo:
        return 1.0

    def integrand(x):
        fx, gx = f(x), g(x)
        s = pi1 * fx + pi2 * gx
        return fx * gx / s if s > 0 else 0.0

    breaks = [lo, hi] + [b for b in (*f.breaks, *g.breaks, f.lo, f.hi, g.lo, g.hi) if lo < b < hi]
    eta = 1.0 - _integrate(integrand, breaks, tol)
    # quadrature round-off can leave values just outside [0, 1]
    if -tol < eta < 0.0 or 1.0 < eta < 1.0 + tol:
        eta = min(max(eta, 0.0), 1.0)
    return float(eta)


def eta_gaussian_location_curve(lambdas, pi1: float = 0.5) -> list[float]:
    """KMD of ``N(0, 1)`` against ``N(lam, 1)`` for each ``lam >= 0``."""
    base = Density1D.normal(0.0, 1.0)
    out = []
    for lam in lambdas:
        if lam < 0:
            raise ValueError("location shifts must be nonnegative")
        out.append(eta_two_sample_1d(base, Density1D.normal(lam, 1.0), pi1))
    return out


def eta_gaussian_scale_curve(lambdas, pi1: float = 0.5) -> list[float]:
    """KMD of ``N(0, 1)`` against the density ``lam * f(lam x)``, i.e. ``N(0, 1/lam^2)``."""
    base = Density1D.normal(0.0, 1.0)
    return [eta_two_sample_1d(base, Density1D.normal(0.0, 1.0 / lam), pi1) for lam in lambdas]


def model_from_json(obj: dict) -> tuple[FiniteJointModel, np.ndarray | None]:
    """Parse ``{"probs": [[...], ...], "pi": [...], "kernel": [[...]]}``.

    ``pi`` defaults to uniform and ``kernel`` to the discrete kernel.
    """
    probs = np.asarray(obj["probs"], dtype=float)
    pi = obj.get("pi")
    model = FiniteJointModel(probs, pi) if pi is not None else FiniteJointModel.uniform_pi(probs)
    kern = obj.get("kernel")
    return model, (np.asarray(kern, dtype=float) if kern is not None else None)
