"""Newton's method with direct (ND), Krylov (NK) or inexact Krylov (INK) steps."""

from __future__ import annotations

import logging
from collections.abc import Callable

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy import sparse

from spinfrac.linalg import DirectSolver, LinearSolverError, krylov_solve
from spinfrac.solvers.base import (
    LineSearchError,
    NewtonConfig,
    NewtonError,
    NewtonIteration,
    NewtonResult,
    NewtonStats,
)
from spinfrac.solvers.line_search import ensure_descent, line_search_cubic
from spinfrac.utils import FloatArray

logger = logging.getLogger(__name__)


class NonlinearProblem(BaseModel):
    """``R(x) = 0`` where R is the gradient of the merit energy ``f``."""

    residual: Callable[[FloatArray], FloatArray]
    jacobian: Callable[[FloatArray], sparse.csr_matrix]
    merit: Callable[[FloatArray], float]
    name: str = "problem"

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)


def linear_step(
    jacobian: sparse.spmatrix, residual: FloatArray, config: NewtonConfig
) -> tuple[FloatArray, int]:
    """Solve ``J p = -R`` as the variant prescribes.

    Returns the step and the number of linear iterations (one per direct
    solve).

    Raises
    ------
    NewtonError
        If the linear solve fails and no direct fallback is allowed.
    """
    rhs = -residual
    spent = 0
    if config.variant == "ND":
        try:
            return DirectSolver(jacobian).solve(rhs), 1
        except LinearSolverError as err:
            raise NewtonError(f"Direct linear solve failed: {err}") from err
    try:
        result = krylov_solve(jacobian, rhs, config.krylov_spec())
    except LinearSolverError as err:
        if not config.direct_fallback:
            raise NewtonError(f"Krylov solve failed: {err}") from err
        logger.warning(f"{err} Retrying with a direct solve.")
    else:
        spent = result.iterations
        if result.converged:
            return result.x, result.iterations
        if not config.direct_fallback:
            raise NewtonError(
                f"{config.krylov_method} did not converge in {result.iterations} "
                "iterations."
            )
        logger.warning(
            f"{config.krylov_method} did not converge in {result.iterations} "
            "iterations, retrying with a direct solve."
        )
    try:
        return DirectSolver(jacobian).solve(rhs), spent + 1
    except LinearSolverError as err:
        raise NewtonError(f"Direct fallback failed: {err}") from err


def newton_solve(
    problem: NonlinearProblem, x0: FloatArray, config: NewtonConfig
) -> NewtonResult:
    """Solve ``R(x) = 0`` with a line search on the merit energy.

    Stops when ``||R(x)|| <= max(eps_abs_sub_nonl, eps_rel_sub_nonl ||R(x0)||)``
    or, with ``stol > 0``, when the accepted step is small relative to x. A stop
    on the step sets ``reason="stol"`` and reports ``converged`` by the residual
    test alone.

    Parameters
    ----------
    problem
        Residual, Jacobian and merit.
    x0
        Initial guess carrying the Dirichlet values.
    config
        Variant, tolerances and line search constants.

    Returns
    -------
    NewtonResult
        Solution, iteration counts and the Jacobian assembled at ``x0``
        (``None`` if no iteration was needed).

    Raises
    ------
    NewtonError
        If ``max_iters`` is exceeded or a linear solve fails.
    LineSearchError
        If no admissible step length is found.
    """
    x = np.array(x0, dtype=np.float64)
    residual = problem.residual(x)
    merit = problem.merit(x)
    norm0 = float(np.linalg.norm(residual))
    tolerance = max(config.eps_abs_sub_nonl, config.eps_rel_sub_nonl * norm0)
    stats = NewtonStats(residual_norm0=norm0, residual_norm=norm0)
    first_jacobian: sparse.csr_matrix | None = None

    for iteration in range(config.max_iters + 1):
        residual_norm = float(np.linalg.norm(residual))
        stats.residual_norm = residual_norm
        if residual_norm <= tolerance:
            stats.converged, stats.reason = True, "residual"
            break
        if iteration == config.max_iters:
            raise NewtonError(
                f"{problem.name}: no convergence in {config.max_iters} iterations "
                f"(||R|| = {residual_norm:.3e} > {tolerance:.3e})."
            )
        jacobian = problem.jacobian(x)
        if first_jacobian is None:
            first_jacobian = jacobian
        step, linear_iterations = linear_step(jacobian, residual, config)
        linear_residual = float(np.linalg.norm(jacobian @ step + residual))
        if config.descent_fallback:
            step = ensure_descent(step, residual)
        try:
            search = line_search_cubic(
                problem.merit,
                problem.residual,
                x,
                step,
                grad=residual,
                f0=merit,
                c1=config.wolfe_c1,
                c2=config.wolfe_c2,
            )
        except LineSearchError as err:
            raise LineSearchError(f"{problem.name}: {err}") from err
        update = search.alpha * step
        x = x + update
        residual = problem.residual(x)
        merit = search.merit
        stats.iterations += 1
        stats.linear_iterations += linear_iterations
        stats.records.append(
            NewtonIteration(
                iteration=iteration + 1,
                residual_norm=float(np.linalg.norm(residual)),
                merit=merit,
                alpha=search.alpha,
                linear_iterations=linear_iterations,
                linear_residual=linear_residual,
                roundoff=search.roundoff,
            )
        )
        logger.debug(
            f"{problem.name} it {iteration + 1}: ||R|| = "
            f"{stats.records[-1].residual_norm:.3e}, alpha = {search.alpha:.3g}, "
            f"linear its = {linear_iterations}"
        )
        small_step = np.linalg.norm(update) <= config.stol * np.linalg.norm(x)
        if config.stol > 0 and small_step:
            stats.residual_norm = stats.records[-1].residual_norm
            stats.converged = stats.residual_norm <= tolerance
            stats.reason = "stol"
            break

    return NewtonResult(x=x, stats=stats, first_jacobian=first_jacobian)
