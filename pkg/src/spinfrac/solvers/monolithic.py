"""Newton's method on the coupled problem, as a baseline for the split solvers."""

from __future__ import annotations

import logging

from pydantic import BaseModel, ConfigDict, Field

from spinfrac.model import PhaseFieldModel, SystemState
from spinfrac.solvers.base import (
    GlobalIteration,
    NewtonConfig,
    NewtonVariant,
    SolverError,
    SolveStats,
)
from spinfrac.solvers.newton import newton_solve
from spinfrac.solvers.subproblems import coupled_problem

logger = logging.getLogger(__name__)


class MonolithicConfig(BaseModel):
    """Coupled Newton settings; the linear solver defaults to GMRES."""

    variant: NewtonVariant = "INK"
    eps_rel_glob_nonl: float = Field(1e-6, ge=0)
    eps_abs_glob_nonl: float = Field(1e-7, ge=0)
    max_outer_iters: int = Field(1000, ge=1)
    stol: float = Field(0.0, ge=0)
    newton: NewtonConfig = NewtonConfig(krylov_method="gmres")

    model_config = ConfigDict(frozen=True)

    @property
    def newton_config(self) -> NewtonConfig:
        """Newton settings with the global tolerances and the descent safeguard."""
        return self.newton.model_copy(
            update={
                "variant": self.variant,
                "eps_abs_sub_nonl": self.eps_abs_glob_nonl,
                "eps_rel_sub_nonl": self.eps_rel_glob_nonl,
                "max_iters": self.max_outer_iters,
                "stol": self.stol,
                "descent_fallback": True,
            }
        )


def monolithic_solve(
    model: PhaseFieldModel, state: SystemState, config: MonolithicConfig
) -> tuple[SystemState, SolveStats]:
    """Solve ``F(U, C) = 0`` with Newton's method and a line search on Psi.

    Linear iterations are reported as global Krylov iterations.

    Raises
    ------
    SolverError
        If Newton does not converge.
    """
    try:
        problem = coupled_problem(model, state.C_prev)
        result = newton_solve(problem, state.x, config.newton_config)
    except SolverError as err:
        raise SolverError(f"Newton-{config.variant}: {err}") from err
    newton = result.stats
    stats = SolveStats(
        converged=newton.converged,
        reason=newton.reason,
        iterations=newton.iterations,
        krylov=newton.linear_iterations,
        residual_norm0=newton.residual_norm0,
        residual_norm=newton.residual_norm,
        records=[
            GlobalIteration(
                iteration=record.iteration,
                residual_norm=record.residual_norm,
                merit=record.merit,
                alpha=record.alpha,
                krylov_iterations=record.linear_iterations,
                krylov_residual=record.linear_residual,
                roundoff=record.roundoff,
            )
            for record in newton.records
        ],
    )
    logger.debug(f"Newton-{config.variant}: {stats.iterations} iterations")
    return state.with_x(result.x), stats
