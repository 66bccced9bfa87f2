"""Null-space constrained editing of linear associative memories."""

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
from .harness import ExperimentConfig, StepMetrics, Trajectory, compare_methods, run_experiment
from .knowledge import (
    AssociativeMemory,
    ConfigError,
    EditHistory,
    KnowledgeSet,
    SyntheticSpec,
    generate_edit_batch,
    generate_world,
    history_extend,
)
from .projector import NullSpaceProjector, build_projector, project_right

__version__ = "0.1.0"
