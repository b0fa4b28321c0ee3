"""Sparse direct and Krylov solvers with their preconditioners."""

from spinfrac.linalg.base import (
    KrylovBreakdownError,
    KrylovMethod,
    KrylovResult,
    KrylovSpec,
    LinearSolverError,
    PreconditionerKind,
    SingularMatrixError,
)
from spinfrac.linalg.direct import DirectSolver, direct_solve
from spinfrac.linalg.krylov import krylov_solve
from spinfrac.linalg.preconditioners import (
    AggregationHierarchy,
    aggregation_preconditioner,
    build_preconditioner,
    jacobi_preconditioner,
)

__all__ = [
    "AggregationHierarchy",
    "DirectSolver",
    "KrylovBreakdownError",
    "KrylovMethod",
    "KrylovResult",
    "KrylovSpec",
    "LinearSolverError",
    "PreconditionerKind",
    "SingularMatrixError",
    "aggregation_preconditioner",
    "build_preconditioner",
    "direct_solve",
    "jacobi_preconditioner",
    "krylov_solve",
]
