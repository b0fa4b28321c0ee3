"""Alternate minimization: displacement solve, then phase-field solve."""

from __future__ import annotations

import logging
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from spinfrac.model import PhaseFieldModel, SystemState
from spinfrac.solvers.base import (
    GlobalIteration,
    NewtonConfig,
    NewtonResult,
    SolverError,
    SolveStats,
    global_tolerance,
)
from spinfrac.solvers.subproblems import solve_displacement, solve_phase_field

logger = logging.getLogger(__name__)

AmVariant = Literal["ND", "NK", "INK", "ST"]


class AmConfig(BaseModel):
    """Alternate minimization settings.

    ``ND``, ``NK`` and ``INK`` stop on the coupled residual. ``ST`` solves the
    subproblems with ND and stops when neither field changes any more.
    """

    variant: AmVariant = "INK"
    eps_rel_glob_nonl: float = Field(1e-6, ge=0)
    eps_abs_glob_nonl: float = Field(1e-7, ge=0)
    eps_c_diff: float = Field(1e-4, ge=0)
    disp_diff_tol: float = Field(1e-12, ge=0)
    max_outer_iters: int = Field(1000, ge=1)
    stol: float = Field(0.0, ge=0)
    subproblem: NewtonConfig = NewtonConfig()

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def check_staggered(self) -> AmConfig:
        """The staggered variant needs an active phase-field criterion."""
        if self.variant == "ST" and self.eps_c_diff <= 0:
            raise ValueError("The ST variant needs eps_c_diff > 0.")
        return self

    @property
    def subproblem_config(self) -> NewtonConfig:
        """Newton settings of both half-steps."""
        variant = "ND" if self.variant == "ST" else self.variant
        return self.subproblem.model_copy(update={"variant": variant})


class AmStepResult(BaseModel):
    """State after one alternate minimization sweep and its two solves."""

    state: SystemState
    u: NewtonResult
    c: NewtonResult

    model_config = ConfigDict(arbitrary_types_allowed=True)


def am_step(
    model: PhaseFieldModel,
    state: SystemState,
    config: NewtonConfig,
) -> AmStepResult:
    """Solve for U at fixed C, then for C at the new U.

    Raises
    ------
    SubproblemError
        Tagged with the failing field.
    """
    u = solve_displacement(model, state.U, state.C, state.C_prev, config)
    c = solve_phase_field(model, u.x, state.C, state.C_prev, config)
    return AmStepResult(
        state=state.model_copy(update={"U": u.x, "C": c.x}), u=u, c=c
    )


def am_solve(
    model: PhaseFieldModel, state: SystemState, config: AmConfig
) -> tuple[SystemState, SolveStats]:
    """Alternate minimization until the configured stopping test holds.

    Parameters
    ----------
    model
        Discrete phase-field model, its dof map carrying this step's
        Dirichlet values.
    state
        Initial guess, Dirichlet values already embedded.
    config
        Variant and tolerances.

    Returns
    -------
    tuple[SystemState, SolveStats]
        Converged state and accumulated iteration counts.

    Raises
    ------
    SolverError
        If ``max_outer_iters`` is exceeded or a subproblem fails.
    """
    newton = config.subproblem_config
    residual = model.residual(state)
    norm0 = float(np.linalg.norm(residual))
    tolerance = global_tolerance(
        norm0, config.eps_abs_glob_nonl, config.eps_rel_glob_nonl
    )
    stats = SolveStats(residual_norm0=norm0, residual_norm=norm0)
    staggered = config.variant == "ST"
    if staggered:
        # Only an already converged state skips the first sweep.
        tolerance = config.eps_abs_glob_nonl

    for iteration in range(config.max_outer_iters + 1):
        residual_norm = float(np.linalg.norm(residual))
        stats.residual_norm = residual_norm
        if residual_norm <= tolerance and (not staggered or iteration == 0):
            stats.converged, stats.reason = True, "residual"
            break
        if iteration == config.max_outer_iters:
            raise SolverError(
                f"AM-{config.variant}: no convergence in {config.max_outer_iters} "
                f"outer iterations (||F|| = {residual_norm:.3e})."
            )
        sweep = am_step(model, state, newton)
        c_change = float(np.max(np.abs(sweep.state.C - state.C), initial=0.0))
        u_change = float(np.max(np.abs(sweep.state.U - state.U), initial=0.0))
        step_norm = float(np.linalg.norm(sweep.state.x - state.x))
        state = sweep.state
        residual = model.residual(state)
        stats.iterations += 1
        stats.add_subproblems(sweep.u.stats, sweep.c.stats)
        record = GlobalIteration(
            iteration=iteration + 1,
            residual_norm=float(np.linalg.norm(residual)),
            merit=model.energy(state.U, state.C, state.C_prev),
            c_change=c_change,
            u_change=u_change,
        )
        stats.records.append(record)
        logger.debug(
            f"AM-{config.variant} it {record.iteration}: ||F|| = "
            f"{record.residual_norm:.3e}, |dC|_inf = {c_change:.3e}, "
            f"newton its u/c = {sweep.u.stats.iterations}/{sweep.c.stats.iterations}"
        )
        unchanged = c_change <= config.eps_c_diff and u_change <= config.disp_diff_tol
        if staggered and unchanged:
            stats.residual_norm = record.residual_norm
            stats.converged, stats.reason = True, "change"
            break
        if config.stol > 0 and step_norm <= config.stol * np.linalg.norm(state.x):
            stats.residual_norm = record.residual_norm
            stats.converged = record.residual_norm <= tolerance
            stats.reason = "stol"
            break

    return state, stats
