"""Oracle-versus-closed-form certification on small seeded instances.

Each check returns a :class:`CheckResult` with the measured quantity and the
tolerance it must meet. ``run_checks`` is what the ``verify`` command runs
and what the acceptance tests reuse.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .editors import (
    SolverConfig,
    alphaedit_stationarity,
    alphaedit_system,
    solve_alphaedit,
    solve_memit,
    solve_naive,
)
from .knowledge import (
    AssociativeMemory,
    EditHistory,
    KnowledgeSet,
    SyntheticSpec,
    generate_edit_batch,
    generate_world,
    history_extend,
)
from .numerics import LinalgError, frobenius_norm, relative_error, solve_with_condition
from .oracle import (
    ObjectiveSpec,
    evaluate_objective,
    finite_difference_gradient,
    gradient,
    minimize,
)
from .projector import NullSpaceProjector, build_projector

ORACLE_DELTA_TOL = 1e-4
ORACLE_OBJECTIVE_TOL = 1e-8
STATIONARITY_TOL = 1e-8
GRADIENT_TOL = 1e-4
PROJECTOR_TOL = 1e-10
ANNIHILATION_TOL = 1e-9


@dataclass(frozen=True)
class CheckResult:
    name: str
    seed: int
    value: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.value) and self.value <= self.tolerance)


@dataclass(frozen=True)
class Instance:
    memory: AssociativeMemory
    preserved: KnowledgeSet
    batch: KnowledgeSet
    history: EditHistory
    proj: NullSpaceProjector

    @property
    def residual(self) -> np.ndarray:
        return self.batch.values - self.memory.weights @ self.batch.keys


def _history(spec: SyntheticSpec, memory: AssociativeMemory, batches: int, size: int) -> EditHistory:
    h = EditHistory.empty(memory.d_in, memory.d_out)
    for t in range(batches):
        b = generate_edit_batch(spec, memory, size, seed=1000 + t)
        # Prior edits are held exactly by the memory being edited.
        h = history_extend(h, KnowledgeSet(b.keys, memory.weights @ b.keys))
    return h


def projected_instance(
    seed: int, d_in: int = 16, d_out: int = 8, u: int = 3, history_batches: int = 3
) -> Instance:
    """Low-rank preserved keys, so ``P`` has a nontrivial range."""
    spec = SyntheticSpec(
        d_in=d_in, d_out=d_out, preserved_count=2 * d_in, effective_rank=d_in * 5 // 8,
        seed=seed,
    )
    memory, preserved = generate_world(spec)
    history = _history(spec, memory, history_batches, u)
    batch = generate_edit_batch(spec, memory, u, seed=1)
    return Instance(memory, preserved, batch, history, build_projector(preserved.keys))


def regularized_instance(
    seed: int, d_in: int = 16, d_out: int = 8, u: int = 3, history_batches: int = 3
) -> Instance:
    """Full-rank, roughly isotropic preserved keys so the memit system is well posed."""
    spec = SyntheticSpec(
        d_in=d_in, d_out=d_out, preserved_count=4 * d_in, effective_rank=d_in, seed=seed
    )
    memory, preserved = generate_world(spec)
    keys = preserved.keys / np.sqrt(preserved.count)
    preserved = KnowledgeSet(keys, memory.weights @ keys)
    history = _history(spec, memory, history_batches, u)
    batch = generate_edit_batch(spec, memory, u, seed=1)
    return Instance(memory, preserved, batch, history, build_projector(preserved.keys))


def check_projector(seed: int, inst: Instance | None = None) -> list[CheckResult]:
    inst = inst or projected_instance(seed)
    p = inst.proj.p
    k0 = inst.preserved.keys
    pn = max(1.0, frobenius_norm(p))
    return [
        CheckResult("projector symmetric", seed, frobenius_norm(p - p.T) / pn, PROJECTOR_TOL),
        CheckResult("projector idempotent", seed, frobenius_norm(p @ p - p) / pn, PROJECTOR_TOL),
        CheckResult(
            "projector annihilates K0", seed,
            frobenius_norm(p @ k0) / frobenius_norm(k0), ANNIHILATION_TOL,
        ),
    ]


def check_alphaedit(
    seed: int, config: SolverConfig = SolverConfig(), inject_bug: bool = False
) -> list[CheckResult]:
    inst = projected_instance(seed)
    sol = solve_alphaedit(inst.memory, inst.batch, inst.proj, inst.history, config)
    delta = -sol.delta if inject_bug else sol.delta
    p = inst.proj.p
    r = inst.residual
    k1 = inst.batch.keys
    stationarity = frobenius_norm(
        alphaedit_stationarity(delta, inst.batch, r, inst.proj, inst.history, config.ridge_scale)
    )
    scale = frobenius_norm(r) * frobenius_norm(k1) + frobenius_norm(delta) * (
        1.0 + frobenius_norm(inst.history.gram)
    )
    spec = ObjectiveSpec(
        "projected-sequential", inst.memory.weights, k1, inst.batch.values,
        p=p, kp=inst.history.prior_keys, ridge=config.ridge_scale,
    )
    res = minimize(spec)
    closed_value = evaluate_objective(spec, delta)
    return [
        CheckResult("alphaedit stationarity", seed, stationarity / scale, STATIONARITY_TOL),
        CheckResult(
            "alphaedit vs oracle (delta P)", seed,
            relative_error(delta @ p, res.delta @ p), ORACLE_DELTA_TOL,
        ),
        CheckResult(
            "alphaedit vs oracle (objective)", seed,
            abs(closed_value - res.objective_value) / max(res.objective_value, 1e-300),
            ORACLE_OBJECTIVE_TOL,
        ),
    ]


def check_memit(seed: int, preserved_weight: float) -> list[CheckResult]:
    inst = regularized_instance(seed)
    k0 = inst.preserved.keys
    config = SolverConfig(preserved_weight=preserved_weight)
    sol = solve_memit(inst.memory, inst.batch, k0 @ k0.T, inst.history, config)
    spec = ObjectiveSpec(
        "regularized", inst.memory.weights, inst.batch.keys, inst.batch.values,
        k0=k0, v0=inst.preserved.values, kp=inst.history.prior_keys,
        preserved_weight=preserved_weight,
    )
    res = minimize(spec)
    closed_value = evaluate_objective(spec, sol.delta)
    tag = f"memit lam={preserved_weight:g}"
    return [
        CheckResult(f"{tag} vs oracle (delta)", seed, relative_error(sol.delta, res.delta), ORACLE_DELTA_TOL),
        CheckResult(
            f"{tag} vs oracle (objective)", seed,
            abs(closed_value - res.objective_value) / max(res.objective_value, 1e-300),
            ORACLE_OBJECTIVE_TOL,
        ),
    ]


def check_naive(seed: int) -> list[CheckResult]:
    # d_in > u: the batch keys have full column rank and the fit is exact.
    inst = projected_instance(seed)
    sol = solve_naive(inst.memory, inst.batch)
    spec = ObjectiveSpec("naive", inst.memory.weights, inst.batch.keys, inst.batch.values)
    res = minimize(spec)
    return [
        CheckResult("naive vs oracle (delta)", seed, relative_error(sol.delta, res.delta), ORACLE_DELTA_TOL),
    ]


def objective_specs(seed: int, d_in: int = 6, d_out: int = 4) -> list[ObjectiveSpec]:
    """One small instance of every objective kind, for gradient checks."""
    inst = projected_instance(seed, d_in=d_in, d_out=d_out, u=2, history_batches=2)
    w, k1, v1 = inst.memory.weights, inst.batch.keys, inst.batch.values
    rng = np.random.default_rng([seed, 77])
    # Perturb V0 so the preserved term has a nonzero gradient at random points.
    v0 = inst.preserved.values + 0.1 * rng.standard_normal(inst.preserved.values.shape)
    p, kp = inst.proj.p, inst.history.prior_keys
    return [
        ObjectiveSpec("naive", w, k1, v1),
        ObjectiveSpec("regularized", w, k1, v1, k0=inst.preserved.keys, v0=v0, kp=kp,
                      preserved_weight=3.0),
        ObjectiveSpec("projected-single", w, k1, v1, p=p, ridge=0.7),
        ObjectiveSpec("projected-sequential", w, k1, v1, p=p, kp=kp, ridge=1.3),
    ]


def check_gradients(seed: int) -> list[CheckResult]:
    out = []
    rng = np.random.default_rng([seed, 78])
    for spec in objective_specs(seed):
        delta = rng.standard_normal(spec.shape)
        g = gradient(spec, delta)
        fd = finite_difference_gradient(spec, delta, step=1e-6)
        out.append(
            CheckResult(f"gradient {spec.kind.value}", seed, relative_error(fd, g), GRADIENT_TOL)
        )
    return out


def check_invertibility(seed: int, ridge: float = 1.0) -> list[CheckResult]:
    inst = projected_instance(seed)
    a = alphaedit_system(inst.batch, inst.proj, inst.history, ridge)
    try:
        _, cond = solve_with_condition(a.T, np.eye(a.shape[0]))
    except LinalgError:
        cond = np.inf
    # Eigenvalues of Gram @ P equal those of P Gram P >= 0, so the spectrum is >= ridge.
    min_eig = float(np.min(np.linalg.eigvals(a).real))
    return [
        CheckResult("bracket condition finite", seed, 0.0 if np.isfinite(cond) else np.inf, 0.0),
        CheckResult("bracket eigenvalues >= ridge", seed, max(0.0, ridge - min_eig) / ridge, 1e-10),
    ]


def run_checks(seeds, inject_bug: bool = False) -> list[CheckResult]:
    results: list[CheckResult] = []
    for seed in seeds:
        results += check_projector(seed)
        results += check_alphaedit(seed, inject_bug=inject_bug)
        for lam in (1.0, 100.0):
            results += check_memit(seed, lam)
        results += check_naive(seed)
        results += check_gradients(seed)
        results += check_invertibility(seed)
    return results
