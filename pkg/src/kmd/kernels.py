"""Kernels on the finite label space ``{0, ..., M-1}``."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidClassCount, InvalidKernel

#: absolute tolerance on asymmetry of user-supplied matrices
SYMMETRY_ATOL = 1e-12
#: relative tolerance for the smallest projected eigenvalue
CHARACTERISTIC_RTOL = 1e-10


@dataclass(frozen=True)
class LabelKernel:
    """Symmetric positive semidefinite ``M x M`` kernel matrix.

    Use :func:`from_matrix`, :func:`make_discrete` or
    :func:`make_weighted_discrete` rather than the constructor, so that the
    matrix is validated and the characteristic flag is computed.
    """

    matrix: np.ndarray
    characteristic: bool = field(default=False)

    @property
    def m(self) -> int:
        return self.matrix.shape[0]

    def __post_init__(self):
        self.matrix.setflags(write=False)

    def relabel(self, perm) -> "LabelKernel":
        """Kernel seen through the class relabeling ``new = perm[old]``."""
        perm = np.asarray(perm)
        inv = np.argsort(perm)
        return from_matrix(self.matrix[np.ix_(inv, inv)])


def _zero_sum_basis(m: int) -> np.ndarray:
    # orthonormal basis of {a : sum(a) = 0}, shape (m, m-1)
    q, _ = np.linalg.qr(np.eye(m) - 1.0 / m)
    return q[:, : m - 1]


def validate_characteristic(k) -> bool:
    """Whether the quadratic form of ``k`` is positive on zero-sum vectors.

    Parameters
    ----------
    k : LabelKernel or array_like
        Kernel or a square matrix.

    Returns
    -------
    bool
        True iff ``a @ K @ a > 0`` for every nonzero ``a`` with ``sum(a) = 0``.
        The check projects ``K`` onto the ``(M-1)``-dimensional zero-sum
        subspace and compares its smallest eigenvalue against
        ``1e-10 * max|K|``.
    """
    mat = k.matrix if isinstance(k, LabelKernel) else np.asarray(k, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise InvalidKernel(f"kernel must be square, got shape {mat.shape}")
    if not np.allclose(mat, mat.T, rtol=0.0, atol=SYMMETRY_ATOL):
        raise InvalidKernel("kernel matrix is not symmetric")
    m = mat.shape[0]
    if m < 2:
        return False
    scale = np.max(np.abs(mat))
    if scale == 0.0:
        return False
    basis = _zero_sum_basis(m)
    proj = basis.T @ mat @ basis
    proj = 0.5 * (proj + proj.T)
    return bool(np.linalg.eigvalsh(proj)[0] > CHARACTERISTIC_RTOL * scale)


def from_matrix(matrix) -> LabelKernel:
    """Validate a user-supplied kernel matrix.

    Entries must be finite, the matrix symmetric to within ``1e-12``
    (it is then symmetrized) and positive semidefinite.
    """
    mat = np.array(matrix, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise InvalidKernel(f"kernel must be square, got shape {mat.shape}")
    if mat.shape[0] < 2:
        raise InvalidClassCount(f"need at least 2 classes, got {mat.shape[0]}")
    if not np.all(np.isfinite(mat)):
        raise InvalidKernel("kernel has non-finite entries")
    if not np.allclose(mat, mat.T, rtol=0.0, atol=SYMMETRY_ATOL):
        raise InvalidKernel("kernel matrix is not symmetric")
    mat = 0.5 * (mat + mat.T)
    scale = max(np.max(np.abs(mat)), 1.0)
    if np.linalg.eigvalsh(mat)[0] < -1e-10 * scale:
        raise InvalidKernel("kernel matrix is not positive semidefinite")
    return LabelKernel(mat, validate_characteristic(mat))


def make_discrete(m: int) -> LabelKernel:
    """The discrete kernel ``K(i, j) = 1{i == j}`` on ``m`` classes."""
    if m < 2:
        raise InvalidClassCount(f"need at least 2 classes, got {m}")
    return LabelKernel(np.eye(m), True)


def make_weighted_discrete(weights) -> LabelKernel:
    """Diagonal kernel with the given positive per-class weights.

    ``make_weighted_discrete([10, 1, 1])`` up-weights agreement within
    class 0, which helps when that class sits in the inner layer of the
    pooled sample.
    """
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size < 2:
        raise InvalidClassCount(f"need at least 2 weights, got {w.size}")
    if not np.all(np.isfinite(w)) or np.any(w <= 0):
        raise InvalidKernel("kernel weights must be positive")
    return LabelKernel(np.diag(w), True)


def parse_kernel(text: str, m: int) -> LabelKernel:
    """Parse a CLI kernel description.

    ``discrete``, ``weighted:<w1,...,wM>`` or ``file:<path>`` where the file
    is a CSV with ``M`` rows.
    """
    if text == "discrete":
        return make_discrete(m)
    if text.startswith("weighted:"):
        weights = [float(w) for w in text[len("weighted:"):].split(",")]
        kern = make_weighted_discrete(weights)
    elif text.startswith("file:"):
        kern = from_matrix(np.loadtxt(text[len("file:"):], delimiter=",", ndmin=2))
    else:
        raise InvalidKernel(f"unknown kernel specification {text!r}")
    if kern.m != m:
        raise InvalidKernel(f"kernel has {kern.m} classes but data has {m}")
    return kern
