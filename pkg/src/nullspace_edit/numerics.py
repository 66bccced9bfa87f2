"""Dense linear-algebra kernel used by the projector and the editors.

Matrices are plain ``numpy.ndarray`` objects of dtype float64 in numpy's
default row-major layout. :func:`as_matrix` is the single entry point that
validates and freezes them; everything downstream assumes its guarantees.

Note on the eigendecomposition: the projector is defined through an SVD of
the Gram matrix ``K @ K.T``. That matrix is symmetric positive semidefinite,
so its SVD and its symmetric eigendecomposition coincide (singular values
equal eigenvalues, left and right singular vectors equal eigenvectors). We
use the symmetric solver because it is cheaper and returns an exactly
orthonormal basis.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

__all__ = [
    "LinalgError",
    "DimensionError",
    "AsymmetryError",
    "SingularMatrixError",
    "EigenDecomposition",
    "as_matrix",
    "eig_symmetric",
    "solve_general",
    "solve_with_condition",
    "solve_min_norm",
    "frobenius_norm",
    "relative_error",
]

PIVOT_TOL = 1e-12


class LinalgError(ValueError):
    """Base class for errors raised by the numerics kernel."""


class DimensionError(LinalgError):
    pass


class AsymmetryError(LinalgError):
    pass


class SingularMatrixError(LinalgError):
    """Raised when a system matrix has a pivot below ``PIVOT_TOL * ||a||_F``.

    ``pivot`` carries the magnitude of the offending pivot and ``index`` its
    position on the diagonal of the LU factor.
    """

    def __init__(self, pivot: float, index: int, scale: float):
        self.pivot = float(pivot)
        self.index = int(index)
        self.scale = float(scale)
        super().__init__(
            f"matrix is numerically singular: pivot {index} has magnitude "
            f"{pivot:.3e} (threshold {PIVOT_TOL * scale:.3e})"
        )


def as_matrix(a, *, name: str = "matrix", allow_empty: bool = False) -> np.ndarray:
    """Return ``a`` as a read-only float64 2-D array.

    Rejects non-finite entries. Zero-width matrices (``d x 0``) are only
    accepted with ``allow_empty=True``; they stand for empty key/value sets.
    """
    m = np.array(a, dtype=np.float64, copy=True)
    if m.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {m.shape}")
    if m.shape[0] < 1 or (m.shape[1] < 1 and not allow_empty):
        raise DimensionError(f"{name} has degenerate shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise LinalgError(f"{name} contains NaN or Inf")
    m.setflags(write=False)
    return m


@dataclass(frozen=True)
class EigenDecomposition:
    """Eigenpairs of a symmetric matrix, eigenvalues in descending order."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        u = self.eigenvectors
        return (u * self.eigenvalues) @ u.T


def eig_symmetric(m, symmetry_tol: float = 1e-10) -> EigenDecomposition:
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"eig_symmetric needs a square matrix, got {m.shape}")
    scale = frobenius_norm(m)
    asym = frobenius_norm(m - m.T)
    if asym > symmetry_tol * scale:
        raise AsymmetryError(
            f"||m - m.T||_F = {asym:.3e} exceeds {symmetry_tol:.1e} * ||m||_F"
        )
    sym = 0.5 * (m + m.T)
    w, v = np.linalg.eigh(sym)
    order = np.argsort(w)[::-1]
    w = w[order]
    v = np.ascontiguousarray(v[:, order])
    w.setflags(write=False)
    v.setflags(write=False)
    return EigenDecomposition(eigenvalues=w, eigenvectors=v)


def _check_system(a: np.ndarray, b: np.ndarray) -> None:
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"system matrix must be square, got {a.shape}")
    if b.ndim != 2 or b.shape[0] != a.shape[0]:
        raise DimensionError(
            f"right-hand side has shape {b.shape}, expected ({a.shape[0]}, k)"
        )


def solve_with_condition(a, b) -> tuple[np.ndarray, float]:
    """Solve ``a @ x = b`` by pivoted LU and return ``(x, cond_2(a))``.

    ``a`` may be non-symmetric. Raises :class:`SingularMatrixError` when any
    pivot falls below ``PIVOT_TOL * ||a||_F``.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_system(a, b)
    scale = frobenius_norm(a)
    if scale == 0.0:
        raise SingularMatrixError(0.0, 0, 0.0)
    with warnings.catch_warnings():
        # Exact zero pivots are reported below via SingularMatrixError.
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(a, check_finite=False)
    pivots = np.abs(np.diag(lu))
    worst = int(np.argmin(pivots))
    if pivots[worst] < PIVOT_TOL * scale:
        raise SingularMatrixError(pivots[worst], worst, scale)
    x = scipy.linalg.lu_solve((lu, piv), b, check_finite=False)
    cond = float(np.linalg.cond(a))
    return x, cond


def solve_general(a, b) -> np.ndarray:
    return solve_with_condition(a, b)[0]


def solve_min_norm(a, b, rcond: float = 1e-10) -> tuple[np.ndarray, float]:
    """Minimum-norm least-squares solution of ``a @ x = b``.

    Singular values below ``rcond * sigma_max`` are treated as zero. Returns
    ``(x, sigma_max / sigma_min_kept)``. Only meaningful when the system is
    consistent, i.e. ``b`` lies in the range of ``a``; callers check that.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_system(a, b)
    x, _, rank, sv = np.linalg.lstsq(a, b, rcond=rcond)
    cond = float(sv[0] / sv[rank - 1]) if rank > 0 else float("inf")
    return x, cond


def frobenius_norm(m) -> float:
    return float(np.linalg.norm(np.ravel(np.asarray(m, dtype=np.float64))))


def relative_error(actual, expected) -> float:
    """``||actual - expected||_F / ||expected||_F``; 0 when both are zero."""
    num = frobenius_norm(np.asarray(actual) - np.asarray(expected))
    den = frobenius_norm(expected)
    if den == 0.0:
        return 0.0 if num == 0.0 else float("inf")
    return num / den
