"""Errors, configuration and iteration records shared by the nonlinear solvers."""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import sparse

from spinfrac.config import get_settings
from spinfrac.fem import FieldName
from spinfrac.linalg import KrylovMethod, KrylovSpec, PreconditionerKind
from spinfrac.utils import FloatArray

NewtonVariant = Literal["ND", "NK", "INK"]
# "stol" marks a stop on a small correction, converged only if the residual
# test also holds.
StopReason = Literal["none", "residual", "stol", "change"]


class SolverError(RuntimeError):
    """A nonlinear solve failed."""


class NewtonError(SolverError):
    """Newton iteration did not converge or its linear step failed."""


class LineSearchError(SolverError):
    """No admissible step length was found along the search direction."""


class SubproblemError(SolverError):
    """Failure of the displacement or phase-field subproblem.

    Parameters
    ----------
    field
        Tag of the failing subproblem, ``"u"`` or ``"c"``.
    message
        Description of the failure.
    """

    def __init__(self, field: FieldName, message: str) -> None:
        super().__init__(f"[{field}] {message}")
        self.field = field


def _default_preconditioner() -> PreconditionerKind:
    return get_settings().linear.preconditioner


class NewtonConfig(BaseModel):
    """Tolerances and linear solver of one Newton solve.

    The linear step is solved exactly for ``ND``, to ``eps_rel_lin`` for ``NK``
    and to the forcing term ``eta`` for ``INK``.
    """

    variant: NewtonVariant = "INK"
    eps_abs_sub_nonl: float = Field(1e-7, ge=0)
    eps_rel_sub_nonl: float = Field(1e-6, ge=0)
    eps_abs_lin: float = Field(1e-9, ge=0)
    eps_rel_lin: float = Field(1e-9, ge=0)
    eta: float = Field(1e-4, ge=0)
    max_iters: int = Field(100, ge=1)
    wolfe_c1: float = Field(1e-4, gt=0, lt=1)
    wolfe_c2: float = Field(0.9, gt=0, lt=1)
    krylov_method: KrylovMethod = "bcgstab"
    preconditioner: PreconditionerKind = Field(default_factory=_default_preconditioner)
    max_linear_iters: int = Field(10000, ge=1)
    # Retry with a sparse LU when the Krylov solve does not converge.
    direct_fallback: bool = True
    # Replace non-descent directions by -grad (needed for indefinite systems).
    descent_fallback: bool = False
    stol: float = Field(0.0, ge=0)

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def check_wolfe(self) -> NewtonConfig:
        """Strong Wolfe constants must satisfy c1 < c2."""
        if self.wolfe_c1 >= self.wolfe_c2:
            raise ValueError("wolfe_c1 must be smaller than wolfe_c2.")
        return self

    def krylov_spec(self) -> KrylovSpec:
        """Linear stopping rule of the NK and INK variants."""
        rel_tol = self.eta if self.variant == "INK" else self.eps_rel_lin
        return KrylovSpec(
            method=self.krylov_method,
            rel_tol=rel_tol,
            abs_tol=self.eps_abs_lin,
            max_iters=self.max_linear_iters,
            preconditioner=self.preconditioner,
            aggregation_levels=get_settings().linear.aggregation_levels,
        )


class NewtonIteration(BaseModel):
    """Trace of one accepted Newton step."""

    iteration: int
    residual_norm: float
    merit: float
    alpha: float
    linear_iterations: int
    # True residual ||J p + R|| of the linear step.
    linear_residual: float
    # Step accepted with sufficient decrease holding only up to roundoff.
    roundoff: bool = False


class NewtonStats(BaseModel):
    """Iteration counts of one Newton solve."""

    iterations: int = 0
    linear_iterations: int = 0
    converged: bool = False
    reason: StopReason = "none"
    residual_norm0: float = 0.0
    residual_norm: float = 0.0
    records: list[NewtonIteration] = []


class NewtonResult(BaseModel):
    """Solution of a Newton solve and the Jacobian at its initial guess."""

    x: FloatArray
    stats: NewtonStats
    first_jacobian: sparse.csr_matrix | None = None

    model_config = ConfigDict(arbitrary_types_allowed=True)


class GlobalIteration(BaseModel):
    """Trace of one outer iteration of a coupled solver."""

    iteration: int
    residual_norm: float
    merit: float
    alpha: float | None = None
    correction_norm: float | None = None
    krylov_iterations: int = 0
    krylov_residual: float | None = None
    c_change: float | None = None
    u_change: float | None = None
    roundoff: bool = False


class SolveStats(BaseModel):
    """Accumulated counts of one loading step of a coupled solver."""

    converged: bool = False
    reason: StopReason = "none"
    iterations: int = 0
    nl_u: int = 0
    nl_c: int = 0
    lin_u: int = 0
    lin_c: int = 0
    krylov: int = 0
    residual_norm0: float = 0.0
    residual_norm: float = 0.0
    records: list[GlobalIteration] = []

    def add_subproblems(self, u: NewtonStats, c: NewtonStats) -> None:
        """Accumulate the counts of one pair of subproblem solves."""
        self.nl_u += u.iterations
        self.nl_c += c.iterations
        self.lin_u += u.linear_iterations
        self.lin_c += c.linear_iterations


def global_tolerance(residual_norm0: float, eps_abs: float, eps_rel: float) -> float:
    """Stopping threshold ``max(eps_abs, eps_rel * ||F0||)``."""
    return max(eps_abs, eps_rel * residual_norm0)
