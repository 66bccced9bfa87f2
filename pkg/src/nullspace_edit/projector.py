"""Projection onto the (approximate) left null space of the preserved keys.

``P = U_hat @ U_hat.T`` where ``U_hat`` collects the eigenvectors of
``K0 @ K0.T`` whose eigenvalue is at most ``threshold``. Right-multiplying a
perturbation by ``P`` removes its action on every preserved key, so
``(W + Delta @ P) @ K0 == W @ K0``.

The Gram matrix and ``K0`` have the same left null space, so working with the
``d_in x d_in`` Gram matrix loses nothing while avoiding the (possibly very
wide) key matrix itself.

With a positive threshold the retained directions are only *approximately*
null: each retained direction ``u`` has ``||u.T @ K0||^2 <= threshold``.
Exact annihilation holds when the Gram matrix is exactly rank deficient and
all its nonzero eigenvalues exceed the threshold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import DimensionError, as_matrix, eig_symmetric

DEFAULT_THRESHOLD = 1e-2


@dataclass(frozen=True)
class NullSpaceProjector:
    p: np.ndarray
    retained_basis: np.ndarray
    threshold: float
    eigenvalues: np.ndarray
    relative: bool = False

    @property
    def retained_dim(self) -> int:
        return self.retained_basis.shape[1]

    @property
    def source_dim(self) -> int:
        return self.p.shape[0]

    @property
    def cutoff(self) -> float:
        """Absolute eigenvalue cutoff actually applied."""
        return _cutoff(self.eigenvalues, self.threshold, self.relative)

    def complement(self) -> np.ndarray:
        """``I - P``, the projector onto the protected (preserved) directions."""
        return np.eye(self.source_dim) - self.p

    def summary(self) -> dict:
        q = np.quantile(self.eigenvalues, [0.0, 0.25, 0.5, 0.75, 1.0])
        return {
            "retained_dim": self.retained_dim,
            "source_dim": self.source_dim,
            "threshold": self.threshold,
            "threshold_mode": "relative" if self.relative else "absolute",
            "spectrum_min": float(q[0]),
            "spectrum_q25": float(q[1]),
            "spectrum_median": float(q[2]),
            "spectrum_q75": float(q[3]),
            "spectrum_max": float(q[4]),
        }


def _cutoff(eigenvalues: np.ndarray, threshold: float, relative: bool) -> float:
    if not relative:
        return threshold
    lead = float(eigenvalues[0]) if eigenvalues.size else 0.0
    return threshold * max(lead, 0.0)


def gram_spectrum(preserved_keys) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (descending) and eigenvectors of ``K0 @ K0.T``."""
    k = as_matrix(preserved_keys, name="preserved_keys", allow_empty=True)
    eig = eig_symmetric(k @ k.T)
    return eig.eigenvalues, eig.eigenvectors


def build_projector(
    preserved_keys, threshold: float = DEFAULT_THRESHOLD, *, relative: bool = False
) -> NullSpaceProjector:
    """Build ``P`` from preserved keys ``K0`` (``d_in x n``, ``n`` may be 0).

    Eigenvectors with eigenvalue ``<= threshold`` are kept (ties are kept).
    In relative mode the cutoff is ``threshold * lambda_max``. If nothing
    qualifies, ``P`` is the zero matrix.
    """
    if not (np.isfinite(threshold) and threshold > 0):
        raise ValueError(f"threshold must be positive and finite, got {threshold}")
    w, u = gram_spectrum(preserved_keys)
    keep = w <= _cutoff(w, threshold, relative)
    basis = np.ascontiguousarray(u[:, keep])
    basis.setflags(write=False)
    p = as_matrix(basis @ basis.T)
    return NullSpaceProjector(
        p=p, retained_basis=basis, threshold=float(threshold), eigenvalues=w,
        relative=relative,
    )


def identity_projector(d_in: int) -> NullSpaceProjector:
    """Projector that leaves every perturbation unchanged (no preserved keys)."""
    return build_projector(np.zeros((d_in, 0)))


def project_right(delta, proj: NullSpaceProjector) -> np.ndarray:
    delta = np.asarray(delta, dtype=np.float64)
    if delta.ndim != 2 or delta.shape[1] != proj.source_dim:
        raise DimensionError(
            f"delta has shape {delta.shape}, projector acts on {proj.source_dim} columns"
        )
    return delta @ proj.p
