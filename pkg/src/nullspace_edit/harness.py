"""Sequential editing experiments.

Every method runs on its own copy of the same generated world and sees the
same stream of edit batches, so methods are compared pairwise under a
shared seed. Per step we record:

``update_error``
    relative recall error on the batch just written (efficacy analogue)
``preservation_error``
    relative recall error on the preserved set ``(K0, V0)``
``retention_error``
    relative recall error on all *earlier* batches, measured against the
    values the memory produced right after each batch was written (not the
    requested targets, which projected methods may only partly reach)

All three are Frobenius relative errors. They are conventions of this
package; they are not dataset accuracies.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np

from .editors import (
    EditSolution,
    Method,
    SolverConfig,
    apply_edit,
    solve_alphaedit,
    solve_memit,
    solve_naive,
    solve_projected_baseline,
)
from .knowledge import (
    AssociativeMemory,
    ConfigError,
    EditHistory,
    KnowledgeSet,
    SyntheticSpec,
    generate_edit_batch,
    generate_world,
    history_extend,
    stored_error,
)
from .numerics import LinalgError, frobenius_norm
from .projector import NullSpaceProjector, build_projector

logger = logging.getLogger(__name__)


class SolverFailure(RuntimeError):
    def __init__(self, method: Method, step: int, cause: Exception):
        self.method = Method(method)
        self.step = step
        self.cause = cause
        super().__init__(f"{self.method} failed at step {step}: {cause}")


@dataclass(frozen=True)
class ExperimentConfig:
    world: SyntheticSpec = field(default_factory=SyntheticSpec)
    batches: int = 20
    batch_size: int = 5
    methods: tuple[Method, ...] = (Method.MEMIT, Method.ALPHAEDIT)
    solver: SolverConfig = field(default_factory=SolverConfig)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(Method(m) for m in self.methods))

    def validate(self) -> "ExperimentConfig":
        self.world.validate()
        if not isinstance(self.batches, (int, np.integer)) or self.batches < 1:
            raise ConfigError(f"must be an integer >= 1, got {self.batches!r}", "batches")
        if not isinstance(self.batch_size, (int, np.integer)) or self.batch_size < 1:
            raise ConfigError(f"must be an integer >= 1, got {self.batch_size!r}", "batch_size")
        if not self.methods:
            raise ConfigError("at least one method is required", "methods")
        if not isinstance(self.seed, (int, np.integer)) or self.seed < 0:
            raise ConfigError(f"must be a non-negative integer, got {self.seed!r}", "seed")
        return self


@dataclass(frozen=True)
class StepMetrics:
    step: int
    method: Method
    update_error: float
    preservation_error: float
    retention_error: float
    delta_norm: float
    normal_eq_residual: float
    capacity_bound: float

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def as_record(self) -> dict:
        return {name: getattr(self, name) for name in self.columns()}


@dataclass(frozen=True)
class Trajectory:
    config: ExperimentConfig
    per_method: dict[Method, list[StepMetrics]]
    projector_summary: dict

    def records(self) -> list[StepMetrics]:
        """All step records, grouped by method in config order."""
        return [m for method in self.config.methods for m in self.per_method[method]]

    def series(self, method, name: str) -> np.ndarray:
        return np.array([getattr(m, name) for m in self.per_method[Method(method)]])


def batch_seed(config: ExperimentConfig, step: int) -> int:
    # Batch stream depends only on (experiment seed, step).
    return config.seed * 1_000_003 + step


def edit_stream(config: ExperimentConfig, memory: AssociativeMemory):
    for t in range(1, config.batches + 1):
        yield t, generate_edit_batch(config.world, memory, config.batch_size, batch_seed(config, t))


def capacity_bound(r: np.ndarray, reachable_keys: np.ndarray) -> float:
    """Fraction of the residual no perturbation can reach.

    ``||R (I - Pi)||_F / ||R||_F`` where ``Pi`` projects onto the row space
    of ``reachable_keys`` (``P K1`` for projected methods, ``K1`` otherwise).
    """
    rn = frobenius_norm(r)
    if rn == 0.0:
        return 0.0
    pi = np.linalg.pinv(reachable_keys, rcond=1e-10) @ reachable_keys
    return frobenius_norm(r - r @ pi) / rn


def _solve(method: Method, memory, batch, proj, preserved_gram, history, solver) -> EditSolution:
    if method is Method.NAIVE:
        return solve_naive(memory, batch)
    if method is Method.MEMIT:
        return solve_memit(memory, batch, preserved_gram, history, solver)
    if method is Method.ALPHAEDIT:
        return solve_alphaedit(memory, batch, proj, history, solver)
    return solve_projected_baseline(memory, batch, proj, preserved_gram, history, solver)


def run_method(
    config: ExperimentConfig,
    method: Method,
    memory: AssociativeMemory,
    preserved: KnowledgeSet,
    proj: NullSpaceProjector,
) -> list[StepMetrics]:
    method = Method(method)
    preserved_gram = preserved.keys @ preserved.keys.T
    history = EditHistory.empty(memory.d_in, memory.d_out)
    current = memory
    out = []
    for t, batch in edit_stream(config, memory):
        r = batch.values - current.weights @ batch.keys
        try:
            sol = _solve(method, current, batch, proj, preserved_gram, history, config.solver)
        except LinalgError as exc:
            raise SolverFailure(method, t, exc) from exc
        current = apply_edit(current, sol)
        reach = proj.p @ batch.keys if method.projected else batch.keys
        out.append(
            StepMetrics(
                step=t,
                method=method,
                update_error=stored_error(current, batch),
                preservation_error=stored_error(current, preserved),
                retention_error=stored_error(current, history.as_knowledge()),
                delta_norm=sol.delta_norm,
                normal_eq_residual=sol.normal_eq_residual,
                capacity_bound=capacity_bound(r, reach),
            )
        )
        achieved = KnowledgeSet(batch.keys, current.weights @ batch.keys)
        history = history_extend(history, achieved)
    return out


def run_experiment(config: ExperimentConfig, workers: int = 1) -> Trajectory:
    """Run every configured method over the same world and batch stream.

    Methods are independent; ``workers > 1`` runs them on a thread pool.
    The projector is built once from the preserved keys and shared.
    """
    config.validate()
    memory, preserved = generate_world(config.world)
    proj = build_projector(
        preserved.keys, config.solver.threshold, relative=config.solver.relative_threshold
    )
    unique = list(dict.fromkeys(config.methods))
    if workers > 1 and len(unique) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {
                m: pool.submit(run_method, config, m, memory, preserved, proj) for m in unique
            }
            per_method = {m: f.result() for m, f in futures.items()}
    else:
        per_method = {m: run_method(config, m, memory, preserved, proj) for m in unique}
    logger.info("ran %d methods x %d steps", len(unique), config.batches)
    return Trajectory(config, per_method, proj.summary())


@dataclass(frozen=True)
class MethodSummary:
    method: Method
    final_preservation_error: float
    mean_update_error: float
    max_retention_error: float
    total_delta_norm: float


@dataclass(frozen=True)
class ComparisonSummary:
    methods: list[MethodSummary]
    # ratios[(a, b)][metric] = metric(a) / metric(b)
    ratios: dict[tuple[str, str], dict[str, float]]

    def rows(self) -> list[dict]:
        return [
            {
                "method": str(s.method),
                "final_preservation_error": s.final_preservation_error,
                "mean_update_error": s.mean_update_error,
                "max_retention_error": s.max_retention_error,
                "total_delta_norm": s.total_delta_norm,
            }
            for s in self.methods
        ]


SUMMARY_COLUMNS = [
    "method",
    "final_preservation_error",
    "mean_update_error",
    "max_retention_error",
    "total_delta_norm",
]
_METRICS = SUMMARY_COLUMNS[1:]


def _ratio(a: float, b: float) -> float:
    if b == 0.0:
        return 1.0 if a == 0.0 else float("inf")
    return a / b


def compare_methods(trajectory: Trajectory) -> ComparisonSummary:
    """Per-method headline numbers plus pairwise ratios.

    Methods listed twice in the config count twice, so duplicated entries
    compare with ratio 1.
    """
    listed = list(trajectory.config.methods)
    if len(listed) < 2:
        raise ValueError("compare_methods needs at least two methods")
    summaries = []
    for m in listed:
        steps = trajectory.per_method[m]
        summaries.append(
            MethodSummary(
                method=m,
                final_preservation_error=steps[-1].preservation_error,
                mean_update_error=float(np.mean([s.update_error for s in steps])),
                max_retention_error=max(s.retention_error for s in steps),
                total_delta_norm=float(sum(s.delta_norm for s in steps)),
            )
        )
    ratios = {}
    for a in summaries:
        for b in summaries:
            if a is b:
                continue
            ratios[(str(a.method), str(b.method))] = {
                k: _ratio(getattr(a, k), getattr(b, k)) for k in _METRICS
            }
    return ComparisonSummary(summaries, ratios)
