"""Nonlinear solvers: Newton, alternate minimization and field-split SPIN."""

from spinfrac.solvers.am import AmConfig, AmStepResult, AmVariant, am_solve, am_step
from spinfrac.solvers.base import (
    GlobalIteration,
    LineSearchError,
    NewtonConfig,
    NewtonError,
    NewtonIteration,
    NewtonResult,
    NewtonStats,
    NewtonVariant,
    SolverError,
    SolveStats,
    SubproblemError,
)
from spinfrac.solvers.line_search import (
    LineSearchResult,
    ensure_descent,
    line_search_cubic,
)
from spinfrac.solvers.monolithic import MonolithicConfig, monolithic_solve
from spinfrac.solvers.newton import NonlinearProblem, linear_step, newton_solve
from spinfrac.solvers.spin import (
    OperatorApplication,
    PreconditionedResidual,
    SpinConfig,
    SpinMode,
    SpinOperator,
    apply_padd_j,
    apply_pmult_j,
    build_residual_additive,
    build_residual_multiplicative,
    spin_solve,
)
from spinfrac.solvers.subproblems import (
    coupled_problem,
    displacement_problem,
    phase_field_problem,
    solve_displacement,
    solve_phase_field,
)

__all__ = [
    "AmConfig",
    "AmStepResult",
    "AmVariant",
    "GlobalIteration",
    "LineSearchError",
    "LineSearchResult",
    "MonolithicConfig",
    "NewtonConfig",
    "NewtonError",
    "NewtonIteration",
    "NewtonResult",
    "NewtonStats",
    "NewtonVariant",
    "NonlinearProblem",
    "OperatorApplication",
    "PreconditionedResidual",
    "SolveStats",
    "SolverError",
    "SpinConfig",
    "SpinMode",
    "SpinOperator",
    "SubproblemError",
    "am_solve",
    "am_step",
    "apply_padd_j",
    "apply_pmult_j",
    "build_residual_additive",
    "build_residual_multiplicative",
    "coupled_problem",
    "displacement_problem",
    "ensure_descent",
    "line_search_cubic",
    "linear_step",
    "monolithic_solve",
    "newton_solve",
    "phase_field_problem",
    "solve_displacement",
    "solve_phase_field",
    "spin_solve",
]
