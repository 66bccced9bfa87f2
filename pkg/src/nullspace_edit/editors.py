"""Closed-form editors for a linear associative memory.

All four editors target a batch ``(K1, V1)`` through the residual
``R = V1 - W @ K1`` and return a perturbation ``delta`` to add to ``W``:

naive
    Minimum-norm least squares fit of the batch alone.
memit
    ``R K1^T (Kp Kp^T + K1 K1^T + lam K0 K0^T)^-1``. Preserved and previously
    edited keys enter as soft penalties.
alphaedit
    ``R K1^T P (Kp Kp^T P + K1 K1^T P + alpha I)^-1``. The result already
    lies in the null space selected by ``P``.
projected-memit
    The memit perturbation right-multiplied by ``P``.

No inverse is ever formed. Every ``X = B A^-1`` is computed by solving
``A^T X^T = B^T``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .knowledge import AssociativeMemory, ConfigError, EditHistory, KnowledgeSet
from .numerics import (
    DimensionError,
    SingularMatrixError,
    as_matrix,
    frobenius_norm,
    solve_min_norm,
    solve_with_condition,
)
from .projector import DEFAULT_THRESHOLD, NullSpaceProjector

NAIVE_RIDGE = 1e-10
# Preserved-weight settings used for full-size language models.
PRESERVED_WEIGHT_PRESETS = {"gpt2-xl": 20_000.0, "gpt-j": 15_000.0, "llama3-8b": 15_000.0}


class Method(str, enum.Enum):
    NAIVE = "naive"
    MEMIT = "memit"
    ALPHAEDIT = "alphaedit"
    PROJECTED_MEMIT = "projected-memit"

    def __str__(self) -> str:
        return self.value

    @property
    def projected(self) -> bool:
        return self in (Method.ALPHAEDIT, Method.PROJECTED_MEMIT)


@dataclass(frozen=True)
class SolverConfig:
    """Solver knobs.

    ``preserved_weight`` multiplies ``K0 K0^T`` in the memit system (1 matches
    the bare closed form; full-size models use 15,000 to 20,000).
    ``ridge_scale`` multiplies the identity in the alphaedit bracket.
    ``strict_memit`` turns a singular memit system into an error instead of
    falling back to the minimum-norm solution of the (consistent) normal
    equation.
    """

    preserved_weight: float = 1.0
    ridge_scale: float = 1.0
    threshold: float = DEFAULT_THRESHOLD
    relative_threshold: bool = False
    strict_memit: bool = False

    def __post_init__(self):
        if not (np.isfinite(self.preserved_weight) and self.preserved_weight > 0):
            raise ConfigError("must be > 0", "preserved_weight")
        if not (np.isfinite(self.ridge_scale) and self.ridge_scale > 0):
            raise ConfigError("must be > 0", "ridge_scale")
        if not (np.isfinite(self.threshold) and self.threshold > 0):
            raise ConfigError("must be > 0", "threshold")


@dataclass(frozen=True)
class EditSolution:
    delta: np.ndarray
    method: Method
    normal_eq_residual: float
    system_condition_estimate: float

    @property
    def delta_norm(self) -> float:
        return frobenius_norm(self.delta)


def _residual(memory: AssociativeMemory, batch: KnowledgeSet) -> np.ndarray:
    batch.check_against(memory)
    return batch.values - memory.weights @ batch.keys


def _zero(memory: AssociativeMemory, method: Method) -> EditSolution:
    return EditSolution(
        as_matrix(np.zeros_like(memory.weights)), method, 0.0, 1.0
    )


def _right_solve(a: np.ndarray, rhs: np.ndarray) -> tuple[np.ndarray, float]:
    """``X`` with ``X @ a = rhs`` via the transposed system."""
    xt, cond = solve_with_condition(a.T, rhs.T)
    return xt.T, cond


def _check_square(name: str, m: np.ndarray, d: int) -> None:
    if m.shape != (d, d):
        raise DimensionError(f"{name} has shape {m.shape}, expected ({d}, {d})")


def solve_naive(memory: AssociativeMemory, batch: KnowledgeSet) -> EditSolution:
    """Minimum-norm ``delta`` with ``(W + delta) K1 ~= V1``.

    Computed as ``R (K1^T K1 + eps I)^-1 K1^T`` with ``eps`` a 1e-10 ridge
    relative to ``||K1^T K1||_F``, which picks the pseudoinverse solution
    when ``K1`` is column-rank deficient.
    """
    r = _residual(memory, batch)
    if batch.count == 0:
        return _zero(memory, Method.NAIVE)
    k1 = batch.keys
    inner = k1.T @ k1
    eps = NAIVE_RIDGE * max(frobenius_norm(inner), np.finfo(float).tiny)
    coef, cond = _right_solve(inner + eps * np.eye(batch.count), r)
    delta = coef @ k1.T
    resid = frobenius_norm((delta @ k1 - r) @ k1.T)
    return EditSolution(as_matrix(delta), Method.NAIVE, resid, cond)


def memit_system(
    batch: KnowledgeSet, preserved_gram: np.ndarray, history: EditHistory, weight: float
) -> np.ndarray:
    k1 = batch.keys
    return history.gram + k1 @ k1.T + weight * preserved_gram


def solve_memit(
    memory: AssociativeMemory,
    batch: KnowledgeSet,
    preserved_gram,
    history: EditHistory,
    config: SolverConfig = SolverConfig(),
) -> EditSolution:
    """Regularized least-squares edit against preserved and prior keys.

    When the system matrix is singular (rank-deficient Grams) the normal
    equation ``delta A = R K1^T`` is still consistent because the row space
    of ``R K1^T`` lies in the range of ``A``. Unless ``config.strict_memit``
    is set, that case is answered with the minimum-norm solution, which is
    also the limit of gradient descent started from zero.
    """
    r = _residual(memory, batch)
    d = memory.d_in
    preserved_gram = np.asarray(preserved_gram, dtype=np.float64)
    _check_square("preserved_gram", preserved_gram, d)
    _check_square("history.gram", history.gram, d)
    if batch.count == 0:
        return _zero(memory, Method.MEMIT)

    k1 = batch.keys
    a = memit_system(batch, preserved_gram, history, config.preserved_weight)
    rhs = r @ k1.T
    try:
        delta, cond = _right_solve(a, rhs)
    except SingularMatrixError:
        if config.strict_memit:
            raise
        xt, cond = solve_min_norm(a.T, rhs.T)
        delta = xt.T
    resid = frobenius_norm(delta @ a - rhs)
    return EditSolution(as_matrix(delta), Method.MEMIT, resid, cond)


def alphaedit_system(
    batch: KnowledgeSet, proj: NullSpaceProjector, history: EditHistory, ridge: float
) -> np.ndarray:
    """The (non-symmetric) bracket ``Kp Kp^T P + K1 K1^T P + ridge I``."""
    k1 = batch.keys
    p = proj.p
    return history.gram @ p + (k1 @ k1.T) @ p + ridge * np.eye(proj.source_dim)


def alphaedit_stationarity(
    delta: np.ndarray,
    batch: KnowledgeSet,
    r: np.ndarray,
    proj: NullSpaceProjector,
    history: EditHistory,
    ridge: float,
) -> np.ndarray:
    """Left side of the projected normal equation evaluated at ``delta``.

    ``(D P K1 - R) K1^T P + ridge D P + D P Kp Kp^T P``; zero at the optimum.
    """
    p = proj.p
    dp = delta @ p
    k1 = batch.keys
    return (dp @ k1 - r) @ k1.T @ p + ridge * dp + dp @ history.gram @ p


def solve_alphaedit(
    memory: AssociativeMemory,
    batch: KnowledgeSet,
    proj: NullSpaceProjector,
    history: EditHistory,
    config: SolverConfig = SolverConfig(),
) -> EditSolution:
    r = _residual(memory, batch)
    d = memory.d_in
    if proj.source_dim != d:
        raise DimensionError(f"projector acts on {proj.source_dim} dims, memory has d_in={d}")
    _check_square("history.gram", history.gram, d)
    if batch.count == 0:
        return _zero(memory, Method.ALPHAEDIT)

    k1 = batch.keys
    a = alphaedit_system(batch, proj, history, config.ridge_scale)
    rhs = r @ k1.T @ proj.p
    x, cond = _right_solve(a, rhs)
    # x already satisfies x = x P; re-projecting strips round-off leakage
    # into the preserved directions so it cannot accumulate over edits.
    delta = x @ proj.p
    resid = frobenius_norm(
        alphaedit_stationarity(delta, batch, r, proj, history, config.ridge_scale)
    )
    return EditSolution(as_matrix(delta), Method.ALPHAEDIT, resid, cond)


def solve_projected_baseline(
    memory: AssociativeMemory,
    batch: KnowledgeSet,
    proj: NullSpaceProjector,
    preserved_gram,
    history: EditHistory,
    config: SolverConfig = SolverConfig(),
) -> EditSolution:
    """MEMIT followed by the one extra line: ``delta = delta @ P``.

    The reported residual is that of the underlying memit solve.
    """
    base = solve_memit(memory, batch, preserved_gram, history, config)
    if proj.source_dim != memory.d_in:
        raise DimensionError(
            f"projector acts on {proj.source_dim} dims, memory has d_in={memory.d_in}"
        )
    delta = base.delta @ proj.p
    return EditSolution(
        as_matrix(delta),
        Method.PROJECTED_MEMIT,
        base.normal_eq_residual,
        base.system_condition_estimate,
    )


def apply_edit(memory: AssociativeMemory, solution: EditSolution) -> AssociativeMemory:
    if solution.delta.shape != memory.weights.shape:
        raise DimensionError(
            f"delta has shape {solution.delta.shape}, weights {memory.weights.shape}"
        )
    return AssociativeMemory(memory.weights + solution.delta)
