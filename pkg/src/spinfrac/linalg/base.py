"""Base types of the linear algebra layer."""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, ConfigDict, Field

from spinfrac.utils import FloatArray

KrylovMethod = Literal["cg", "bcgstab", "minres", "gmres"]
PreconditionerKind = Literal["none", "jacobi", "aggregation"]


class LinearSolverError(RuntimeError):
    """A linear solve could not deliver a solution."""


class SingularMatrixError(LinearSolverError):
    """Factorization met a zero pivot."""


class KrylovBreakdownError(LinearSolverError):
    """A Krylov recurrence broke down (e.g. BCGSTAB with rho or omega = 0)."""


class KrylovSpec(BaseModel):
    """Krylov method, stopping rule and preconditioner.

    A solve is converged when ``||b - A x|| <= max(rel_tol * ||b||, abs_tol)``.
    With ``verify_residual=False`` GMRES stops on its own residual estimate
    instead, for operators that are only applied approximately.
    """

    method: KrylovMethod = "bcgstab"
    rel_tol: float = Field(1e-9, ge=0)
    abs_tol: float = Field(0.0, ge=0)
    max_iters: int = Field(10000, ge=1)
    restart: int = Field(200, ge=1)
    preconditioner: PreconditionerKind = "jacobi"
    aggregation_levels: int = Field(4, ge=1)
    verify_residual: bool = True

    model_config = ConfigDict(frozen=True)


class KrylovResult(BaseModel):
    """Outcome of ``krylov_solve``."""

    x: FloatArray
    iterations: int
    converged: bool
    # True residual norm, or the GMRES estimate when verify_residual is off.
    residual_norm: float
    # Residual norms reported by GMRES, one per inner iteration.
    history: list[float] = []

    model_config = ConfigDict(arbitrary_types_allowed=True)
