"""Brute-force reference minimizer for the editing objectives.

Everything here is deliberately independent of :mod:`editors`: objectives
are written out term by term, gradients are derived by hand, and the
minimizer is plain gradient descent with backtracking. Nothing is factored
or solved. The closed-form solvers are checked against this module and
never the other way round.

Objective kinds (``D`` is the perturbation, ``||.||`` the Frobenius norm):

naive
    ``||(W + D) K1 - V1||^2``
regularized
    ``||(W + D) K1 - V1||^2 + lam ||(W + D) K0 - V0||^2 + ||D Kp||^2``
projected-single
    ``||(W + D P) K1 - V1||^2 + alpha ||D P||^2``
projected-sequential
    projected-single ``+ ||D P Kp||^2``

The prior-edit term is written as ``||D Kp||^2`` because prior edits are
stored exactly (``W Kp = Vp``) at the time the objective is posed.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)


_SLACK = 8 * np.finfo(float).eps


class ObjectiveKind(str, enum.Enum):
    NAIVE = "naive"
    REGULARIZED = "regularized"
    PROJECTED_SINGLE = "projected-single"
    PROJECTED_SEQUENTIAL = "projected-sequential"


class DivergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class ObjectiveSpec:
    kind: ObjectiveKind
    w: np.ndarray
    k1: np.ndarray
    v1: np.ndarray
    k0: np.ndarray | None = None
    v0: np.ndarray | None = None
    p: np.ndarray | None = None
    kp: np.ndarray | None = None
    preserved_weight: float = 1.0
    ridge: float = 1.0

    def __post_init__(self):
        kind = ObjectiveKind(self.kind)
        object.__setattr__(self, "kind", kind)
        d_out, d_in = self.w.shape
        if self.k1.shape[0] != d_in or self.v1.shape != (d_out, self.k1.shape[1]):
            raise ValueError("K1/V1 do not match W")
        if kind is ObjectiveKind.REGULARIZED:
            if self.k0 is None or self.v0 is None:
                raise ValueError("regularized objective needs K0 and V0")
            if self.k0.shape[0] != d_in or self.v0.shape != (d_out, self.k0.shape[1]):
                raise ValueError("K0/V0 do not match W")
        if kind in (ObjectiveKind.PROJECTED_SINGLE, ObjectiveKind.PROJECTED_SEQUENTIAL):
            if self.p is None or self.p.shape != (d_in, d_in):
                raise ValueError("projected objectives need a d_in x d_in projector")
        if kind is ObjectiveKind.PROJECTED_SEQUENTIAL and self.kp is None:
            raise ValueError("projected-sequential objective needs Kp")
        if self.kp is not None and self.kp.shape[0] != d_in:
            raise ValueError("Kp does not match W")

    @property
    def shape(self) -> tuple[int, int]:
        return self.w.shape

    @property
    def projected(self) -> bool:
        return self.kind in (ObjectiveKind.PROJECTED_SINGLE, ObjectiveKind.PROJECTED_SEQUENTIAL)


@dataclass
class OracleResult:
    delta: np.ndarray
    objective_value: float
    iterations: int
    converged: bool
    final_gradient_norm: float
    history: list[float] = field(default_factory=list, repr=False)


def _sq(m: np.ndarray) -> float:
    with np.errstate(over="ignore", invalid="ignore"):
        return float(np.sum(m * m))


def _check_delta(spec: ObjectiveSpec, delta: np.ndarray) -> np.ndarray:
    delta = np.asarray(delta, dtype=np.float64)
    if delta.shape != spec.shape:
        raise ValueError(f"delta has shape {delta.shape}, expected {spec.shape}")
    return delta


def evaluate_objective(spec: ObjectiveSpec, delta) -> float:
    delta = _check_delta(spec, delta)
    kind = spec.kind
    eff = delta @ spec.p if spec.projected else delta
    value = _sq((spec.w + eff) @ spec.k1 - spec.v1)
    if kind is ObjectiveKind.REGULARIZED:
        value += spec.preserved_weight * _sq((spec.w + eff) @ spec.k0 - spec.v0)
        if spec.kp is not None:
            value += _sq(eff @ spec.kp)
    elif spec.projected:
        value += spec.ridge * _sq(eff)
        if kind is ObjectiveKind.PROJECTED_SEQUENTIAL:
            value += _sq(eff @ spec.kp)
    return value


def gradient(spec: ObjectiveSpec, delta) -> np.ndarray:
    """Analytic gradient of :func:`evaluate_objective` with respect to ``delta``."""
    delta = _check_delta(spec, delta)
    kind = spec.kind
    if kind is ObjectiveKind.NAIVE:
        return 2.0 * ((spec.w + delta) @ spec.k1 - spec.v1) @ spec.k1.T
    if kind is ObjectiveKind.REGULARIZED:
        g = 2.0 * ((spec.w + delta) @ spec.k1 - spec.v1) @ spec.k1.T
        g += 2.0 * spec.preserved_weight * ((spec.w + delta) @ spec.k0 - spec.v0) @ spec.k0.T
        if spec.kp is not None:
            g += 2.0 * (delta @ spec.kp) @ spec.kp.T
        return g
    # P symmetric and idempotent: d/dD of f(D P) is grad_f(D P) @ P.
    p = spec.p
    dp = delta @ p
    g = 2.0 * ((spec.w + dp) @ spec.k1 - spec.v1) @ spec.k1.T @ p + 2.0 * spec.ridge * dp
    if kind is ObjectiveKind.PROJECTED_SEQUENTIAL:
        g += 2.0 * (dp @ spec.kp) @ spec.kp.T @ p
    return g


def finite_difference_gradient(spec: ObjectiveSpec, delta, step: float = 1e-6) -> np.ndarray:
    """Element-wise central differences of the objective."""
    delta = np.array(_check_delta(spec, delta), copy=True)
    out = np.empty_like(delta)
    for idx in np.ndindex(delta.shape):
        orig = delta[idx]
        delta[idx] = orig + step
        fp = evaluate_objective(spec, delta)
        delta[idx] = orig - step
        fm = evaluate_objective(spec, delta)
        delta[idx] = orig
        out[idx] = (fp - fm) / (2.0 * step)
    return out


def lipschitz_estimate(spec: ObjectiveSpec, iters: int = 200, seed: int = 0) -> float:
    """Largest curvature of the objective, by power iteration on the gradient map.

    The objectives are quadratic, so ``gradient(x) - gradient(0)`` is the
    Hessian applied to ``x``.
    """
    g0 = gradient(spec, np.zeros(spec.shape))
    x = np.random.default_rng(seed).standard_normal(spec.shape)
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(iters):
        hx = gradient(spec, x) - g0
        lam_new = float(np.linalg.norm(hx))
        if lam_new == 0.0:
            return 0.0
        x = hx / lam_new
        if abs(lam_new - lam) <= 1e-6 * lam_new:
            lam = lam_new
            break
        lam = lam_new
    return lam


def default_step(spec: ObjectiveSpec) -> float:
    """``1 / L`` with a 10% safety margin on the curvature estimate."""
    lip = lipschitz_estimate(spec)
    if lip > 0:
        return 1.0 / (1.1 * lip)
    k1 = spec.k1
    scale = float(np.linalg.norm(k1 @ k1.T))
    return 1e-2 / scale if scale > 0 else 1e-2


def minimize(
    spec: ObjectiveSpec,
    step: float | None = None,
    max_iters: int = 50_000,
    grad_tol: float = 1e-10,
    growth: float = 1.0,
    record: bool = False,
) -> OracleResult:
    """Gradient descent from ``delta = 0``.

    A step that raises the objective (beyond round-off) is undone and the step
    size halved, so accepted iterates are monotone. ``growth > 1`` lets the
    step size recover after each accepted step. Convergence means
    ``||grad||_F <= grad_tol * ||grad at 0||_F``.
    """
    step = default_step(spec) if step is None else step
    if not step > 0:
        raise ValueError("step must be positive")
    delta = np.zeros(spec.shape)
    value = evaluate_objective(spec, delta)
    g = gradient(spec, delta)
    gnorm = float(np.linalg.norm(g))
    if not (np.isfinite(value) and np.isfinite(gnorm)):
        raise DivergenceError("objective or gradient is non-finite at the starting point")
    target = grad_tol * gnorm
    trace = [value] if record else []
    it = 0
    while gnorm > target and it < max_iters:
        it += 1
        cand = delta - step * g
        cand_value = evaluate_objective(spec, cand)
        if not np.isfinite(cand_value):
            raise DivergenceError(f"objective became non-finite at iteration {it}")
        # Slack absorbs round-off once decreases fall below machine precision.
        if cand_value > value + _SLACK * abs(value):
            step *= 0.5
            if step < 1e-300:
                break
            continue
        delta, value = cand, cand_value
        g = gradient(spec, delta)
        gnorm = float(np.linalg.norm(g))
        step *= growth
        if record:
            trace.append(value)
    converged = gnorm <= target
    if not converged:
        logger.warning("oracle stopped after %d iterations, |grad|=%.3e", it, gnorm)
    return OracleResult(delta, value, it, converged, gnorm, trace)
