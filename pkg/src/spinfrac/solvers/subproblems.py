"""Displacement, phase-field and coupled problems of a phase-field model."""

from __future__ import annotations

import numpy as np
from scipy import sparse

from spinfrac.fem import FieldName
from spinfrac.model import PhaseFieldModel, SystemState
from spinfrac.solvers.base import (
    NewtonConfig,
    NewtonResult,
    SolverError,
    SubproblemError,
)
from spinfrac.solvers.newton import NonlinearProblem, newton_solve
from spinfrac.utils import FloatArray


def displacement_problem(
    model: PhaseFieldModel, C: FloatArray, C_prev: FloatArray
) -> NonlinearProblem:
    """Minimize the energy over U with the phase field fixed."""
    return NonlinearProblem(
        residual=lambda U: model.residual_u(U, C),
        jacobian=lambda U: model.jacobian_uu(U, C),
        merit=lambda U: model.energy(U, C, C_prev),
        name="u",
    )


def phase_field_problem(
    model: PhaseFieldModel, U: FloatArray, C_prev: FloatArray
) -> NonlinearProblem:
    """Minimize the energy over C with the displacement fixed."""
    return NonlinearProblem(
        residual=lambda C: model.residual_c(U, C, C_prev),
        jacobian=lambda C: model.jacobian_cc(U, C, C_prev),
        merit=lambda C: model.energy(U, C, C_prev),
        name="c",
    )


def coupled_problem(model: PhaseFieldModel, C_prev: FloatArray) -> NonlinearProblem:
    """The monolithic problem in the stacked unknown ``[U; C]``."""
    n_u = model.dofmap.n_u

    def residual(x: FloatArray) -> FloatArray:
        U, C = x[:n_u], x[n_u:]
        return np.concatenate([model.residual_u(U, C), model.residual_c(U, C, C_prev)])

    def jacobian(x: FloatArray) -> sparse.csr_matrix:
        state = SystemState(U=x[:n_u], C=x[n_u:], C_prev=C_prev)
        return model.jacobian(state).monolithic()

    return NonlinearProblem(
        residual=residual,
        jacobian=jacobian,
        merit=lambda x: model.energy(x[:n_u], x[n_u:], C_prev),
        name="coupled",
    )


def _solve(
    field: FieldName, problem: NonlinearProblem, x0: FloatArray, config: NewtonConfig
) -> NewtonResult:
    try:
        return newton_solve(problem, x0, config)
    except SolverError as err:
        raise SubproblemError(field, str(err)) from err


def solve_displacement(
    model: PhaseFieldModel,
    U: FloatArray,
    C: FloatArray,
    C_prev: FloatArray,
    config: NewtonConfig,
) -> NewtonResult:
    """Solve ``F_u(U', C) = 0`` starting from U.

    Raises
    ------
    SubproblemError
        Tagged ``"u"`` on failure.
    """
    return _solve("u", displacement_problem(model, C, C_prev), U, config)


def solve_phase_field(
    model: PhaseFieldModel,
    U: FloatArray,
    C: FloatArray,
    C_prev: FloatArray,
    config: NewtonConfig,
) -> NewtonResult:
    """Solve ``F_c(U, C') = 0`` starting from C.

    Raises
    ------
    SubproblemError
        Tagged ``"c"`` on failure.
    """
    return _solve("c", phase_field_problem(model, U, C_prev), C, config)
