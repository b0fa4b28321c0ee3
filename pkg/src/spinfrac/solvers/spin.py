"""Additive and multiplicative field-split preconditioned inexact Newton.

Each outer iteration solves both subproblems to build the preconditioned
residual ``s = x_prec - x``, solves ``P J p = s`` with a matrix-free Krylov
method and takes a line search step along ``p`` on the coupled energy. The
action of ``P J`` only needs approximate solves with the diagonal blocks.
"""

from __future__ import annotations

import asyncio
import logging
from typing import Literal, NamedTuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import sparse
from scipy.sparse.linalg import LinearOperator

from spinfrac.config import get_settings
from spinfrac.linalg import (
    DirectSolver,
    KrylovBreakdownError,
    KrylovMethod,
    KrylovSpec,
    LinearSolverError,
    PreconditionerKind,
    build_preconditioner,
    krylov_solve,
)
from spinfrac.model import BlockJacobian, PhaseFieldModel, SystemState
from spinfrac.solvers.base import (
    GlobalIteration,
    NewtonConfig,
    NewtonResult,
    SolverError,
    SolveStats,
    global_tolerance,
)
from spinfrac.solvers.line_search import ensure_descent, line_search_cubic
from spinfrac.solvers.subproblems import solve_displacement, solve_phase_field
from spinfrac.utils import FloatArray

logger = logging.getLogger(__name__)

SpinMode = Literal["additive", "multiplicative"]

# Larger inner tolerances make the outer iteration stagnate.
MAX_STABLE_EPS_APP_LIN = 1e-2


def _default_restart() -> int:
    return get_settings().linear.gmres_restart


def _default_preconditioner() -> PreconditionerKind:
    return get_settings().linear.preconditioner


class SpinConfig(BaseModel):
    """ASPIN (``mode="additive"``) or MSPIN (``mode="multiplicative"``) settings."""

    mode: SpinMode = "additive"
    eps_app_lin: float = Field(1e-4, gt=0)
    eta: float = Field(1e-4, gt=0)
    eps_rel_glob_nonl: float = Field(1e-6, ge=0)
    eps_abs_glob_nonl: float = Field(1e-7, ge=0)
    max_outer_iters: int = Field(1000, ge=1)
    stol: float = Field(0.0, ge=0)
    global_method: Literal["gmres", "minres"] = "gmres"
    restart: int = Field(default_factory=_default_restart, ge=1)
    max_global_krylov: int = Field(1000, ge=1)
    inner_method: KrylovMethod = "bcgstab"
    inner_preconditioner: PreconditionerKind = Field(
        default_factory=_default_preconditioner
    )
    max_inner_iters: int = Field(10000, ge=1)
    subproblem: NewtonConfig = NewtonConfig(variant="INK")
    # Solve the two additive subproblems in worker threads.
    concurrent: bool = True
    # Take J_uu (and J_cc for ASPIN) from the first subproblem Newton iteration.
    reuse_jacobians: bool = True
    # False admits eps_app_lin above the stable bound, for tolerance studies.
    check_stability: bool = True

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def check_inner_tolerance(self) -> SpinConfig:
        """Inner application tolerance must not exceed the stability bound."""
        if self.check_stability and self.eps_app_lin > MAX_STABLE_EPS_APP_LIN:
            raise ValueError(
                f"eps_app_lin = {self.eps_app_lin} exceeds {MAX_STABLE_EPS_APP_LIN}."
            )
        return self

    @property
    def label(self) -> str:
        """Short solver name."""
        return "ASPIN" if self.mode == "additive" else "MSPIN"


class PreconditionedResidual(BaseModel):
    """Corrections of one preconditioning step and the solves behind them."""

    U_prec: FloatArray
    C_prec: FloatArray
    s_u: FloatArray
    s_c: FloatArray
    u: NewtonResult
    c: NewtonResult

    model_config = ConfigDict(arbitrary_types_allowed=True)

    @property
    def s(self) -> FloatArray:
        """Stacked correction ``[s_u; s_c]``."""
        return np.concatenate([self.s_u, self.s_c])


def _corrections(
    state: SystemState, u: NewtonResult, c: NewtonResult
) -> PreconditionedResidual:
    return PreconditionedResidual(
        U_prec=u.x, C_prec=c.x, s_u=u.x - state.U, s_c=c.x - state.C, u=u, c=c
    )


async def _solve_concurrently(
    model: PhaseFieldModel, state: SystemState, config: NewtonConfig
) -> tuple[NewtonResult, NewtonResult]:
    u, c = await asyncio.gather(
        asyncio.to_thread(
            solve_displacement, model, state.U, state.C, state.C_prev, config
        ),
        asyncio.to_thread(
            solve_phase_field, model, state.U, state.C, state.C_prev, config
        ),
    )
    return u, c


def build_residual_additive(
    model: PhaseFieldModel,
    state: SystemState,
    config: NewtonConfig,
    concurrent: bool = False,
) -> PreconditionedResidual:
    """Solve both subproblems from the current state, independently.

    Raises
    ------
    SubproblemError
        Tagged with the failing field.
    """
    if concurrent:
        u, c = asyncio.run(_solve_concurrently(model, state, config))
    else:
        u = solve_displacement(model, state.U, state.C, state.C_prev, config)
        c = solve_phase_field(model, state.U, state.C, state.C_prev, config)
    return _corrections(state, u, c)


def build_residual_multiplicative(
    model: PhaseFieldModel, state: SystemState, config: NewtonConfig
) -> PreconditionedResidual:
    """Solve for U, then for C with the new U (one alternate minimization sweep).

    Raises
    ------
    SubproblemError
        Tagged with the failing field.
    """
    u = solve_displacement(model, state.U, state.C, state.C_prev, config)
    c = solve_phase_field(model, u.x, state.C, state.C_prev, config)
    return _corrections(state, u, c)


class OperatorApplication(NamedTuple):
    """Result of one ``P J v`` product."""

    y: FloatArray
    iterations_u: int
    iterations_c: int


class _BlockSolver:
    """Approximate inverse of one diagonal block."""

    def __init__(self, matrix: sparse.csr_matrix, spec: KrylovSpec) -> None:
        self.matrix = matrix
        self.spec = spec
        self.preconditioner = build_preconditioner(
            matrix, spec.preconditioner, spec.aggregation_levels
        )
        self._direct: DirectSolver | None = None

    def solve(self, rhs: FloatArray) -> tuple[FloatArray, int]:
        """Solve with the configured Krylov method, directly if it fails."""
        iterations = 0
        try:
            result = krylov_solve(
                self.matrix, rhs, self.spec, preconditioner=self.preconditioner
            )
        except KrylovBreakdownError as err:
            logger.warning(f"Inner solve: {err} Using a direct solve.")
        else:
            if result.converged:
                return result.x, result.iterations
            iterations = result.iterations
            logger.warning(
                f"Inner {self.spec.method} did not reach {self.spec.rel_tol:.1e} in "
                f"{iterations} iterations, using a direct solve."
            )
        if self._direct is None:
            self._direct = DirectSolver(self.matrix)
        return self._direct.solve(rhs), iterations


class SpinOperator:
    """Matrix-free ``P J`` for one linearization point.

    Parameters
    ----------
    jacobian
        Block Jacobian at the current iterate.
    mode
        ``"additive"`` for the block-diagonal preconditioner,
        ``"multiplicative"`` for the block lower-triangular one.
    eps_app_lin
        Relative tolerance of the inner block solves.
    method, preconditioner, max_iters
        Inner Krylov method, its preconditioner and iteration cap.
    """

    def __init__(
        self,
        jacobian: BlockJacobian,
        mode: SpinMode,
        eps_app_lin: float,
        method: KrylovMethod = "bcgstab",
        preconditioner: PreconditionerKind = "jacobi",
        max_iters: int = 10000,
    ) -> None:
        self.jacobian = jacobian
        self.mode = mode
        spec = KrylovSpec(
            method=method,
            rel_tol=eps_app_lin,
            abs_tol=0.0,
            max_iters=max_iters,
            preconditioner=preconditioner,
            aggregation_levels=get_settings().linear.aggregation_levels,
        )
        self.block_u = _BlockSolver(jacobian.uu, spec)
        self.block_c = _BlockSolver(jacobian.cc, spec)
        self.iterations_u = 0
        self.iterations_c = 0

    @property
    def size(self) -> int:
        """Number of stacked unknowns."""
        return self.jacobian.n_u + self.jacobian.n_c

    def apply(self, v: FloatArray) -> OperatorApplication:
        """Compute ``P J v``."""
        n_u = self.jacobian.n_u
        w = self.jacobian.matvec(np.ravel(v))
        y_u, its_u = self.block_u.solve(w[:n_u])
        if self.mode == "additive":
            z_c = w[n_u:]
        else:
            z_c = w[n_u:] - self.jacobian.cu @ y_u
        y_c, its_c = self.block_c.solve(z_c)
        self.iterations_u += its_u
        self.iterations_c += its_c
        return OperatorApplication(np.concatenate([y_u, y_c]), its_u, its_c)

    def as_operator(self) -> LinearOperator:
        """Wrap ``apply`` for the scipy Krylov solvers."""
        return LinearOperator(
            (self.size, self.size),
            matvec=lambda v: self.apply(v).y,
            dtype=np.float64,
        )


def apply_padd_j(
    jacobian: BlockJacobian,
    v: FloatArray,
    eps_app_lin: float,
    method: KrylovMethod = "bcgstab",
    preconditioner: PreconditionerKind = "jacobi",
) -> OperatorApplication:
    """One product with the additively preconditioned Jacobian.

    ``w = J v``, then ``y_u ~ J_uu^{-1} w_u`` and ``y_c ~ J_cc^{-1} w_c``, the
    block solves to relative tolerance ``eps_app_lin``.
    """
    operator = SpinOperator(
        jacobian, "additive", eps_app_lin, method=method, preconditioner=preconditioner
    )
    return operator.apply(v)


def apply_pmult_j(
    jacobian: BlockJacobian,
    v: FloatArray,
    eps_app_lin: float,
    method: KrylovMethod = "bcgstab",
    preconditioner: PreconditionerKind = "jacobi",
) -> OperatorApplication:
    """One product with the multiplicatively preconditioned Jacobian.

    ``w = J v``, ``y_u ~ J_uu^{-1} w_u`` and ``y_c ~ J_cc^{-1} (w_c - J_cu y_u)``.
    """
    operator = SpinOperator(
        jacobian,
        "multiplicative",
        eps_app_lin,
        method=method,
        preconditioner=preconditioner,
    )
    return operator.apply(v)


def spin_solve(
    model: PhaseFieldModel, state: SystemState, config: SpinConfig
) -> tuple[SystemState, SolveStats]:
    """Field-split preconditioned inexact Newton until the coupled residual is small.

    The stopping test is ``||F|| <= max(eps_abs_glob_nonl, eps_rel_glob_nonl
    ||F0||)`` on the original (not the preconditioned) residual.

    Parameters
    ----------
    model
        Discrete phase-field model with this step's Dirichlet values.
    state
        Initial guess, Dirichlet values already embedded.
    config
        Mode and tolerances.

    Returns
    -------
    tuple[SystemState, SolveStats]
        Converged state and accumulated iteration counts.

    Raises
    ------
    SolverError
        If ``max_outer_iters`` is exceeded, the global Krylov solve fails or
        no step length is found.
    """
    newton = config.subproblem
    residual = model.residual(state)
    merit = model.energy(state.U, state.C, state.C_prev)
    norm0 = float(np.linalg.norm(residual))
    tolerance = global_tolerance(
        norm0, config.eps_abs_glob_nonl, config.eps_rel_glob_nonl
    )
    stats = SolveStats(residual_norm0=norm0, residual_norm=norm0)
    n_u = model.dofmap.n_u
    global_spec = KrylovSpec(
        method=config.global_method,
        rel_tol=config.eta,
        abs_tol=0.0,
        max_iters=config.max_global_krylov,
        restart=config.restart,
        preconditioner="none",
        # Inexact block solves make P J noisy below eps_app_lin.
        verify_residual=False,
    )

    def energy(x: FloatArray) -> float:
        return model.energy(x[:n_u], x[n_u:], state.C_prev)

    def gradient(x: FloatArray) -> FloatArray:
        return model.residual(state.with_x(x))

    for iteration in range(config.max_outer_iters + 1):
        residual_norm = float(np.linalg.norm(residual))
        stats.residual_norm = residual_norm
        if residual_norm <= tolerance:
            stats.converged, stats.reason = True, "residual"
            break
        if iteration == config.max_outer_iters:
            raise SolverError(
                f"{config.label}: no convergence in {config.max_outer_iters} "
                f"outer iterations (||F|| = {residual_norm:.3e})."
            )

        if config.mode == "additive":
            corrections = build_residual_additive(
                model, state, newton, concurrent=config.concurrent
            )
        else:
            corrections = build_residual_multiplicative(model, state, newton)
        stats.add_subproblems(corrections.u.stats, corrections.c.stats)
        s = corrections.s
        correction_norm = float(np.linalg.norm(s))

        uu = corrections.u.first_jacobian if config.reuse_jacobians else None
        cc = None
        if config.reuse_jacobians and config.mode == "additive":
            cc = corrections.c.first_jacobian
        jacobian = model.jacobian(state, uu=uu, cc=cc)
        operator = SpinOperator(
            jacobian,
            config.mode,
            config.eps_app_lin,
            method=config.inner_method,
            preconditioner=config.inner_preconditioner,
            max_iters=config.max_inner_iters,
        )
        try:
            krylov = krylov_solve(operator.as_operator(), s, global_spec)
        except LinearSolverError as err:
            raise SolverError(
                f"{config.label}: global Krylov solve failed: {err}"
            ) from err
        if not krylov.converged:
            raise SolverError(
                f"{config.label}: {config.global_method} did not reach "
                f"||PJp - s|| <= {config.eta:.1e} ||s|| in {krylov.iterations} "
                "iterations."
            )

        def newton_direction(jacobian: BlockJacobian = jacobian) -> FloatArray:
            fallback_spec = KrylovSpec(
                method="gmres",
                rel_tol=config.eta,
                abs_tol=newton.eps_abs_lin,
                max_iters=config.max_global_krylov,
                restart=config.restart,
                preconditioner="jacobi",
            )
            return krylov_solve(jacobian.monolithic(), -residual, fallback_spec).x

        direction = ensure_descent(krylov.x, residual, newton_direction)
        search = line_search_cubic(
            energy,
            gradient,
            state.x,
            direction,
            grad=residual,
            f0=merit,
            c1=newton.wolfe_c1,
            c2=newton.wolfe_c2,
        )
        update = search.alpha * direction
        state = state.with_x(state.x + update)
        residual = model.residual(state)
        merit = search.merit

        stats.iterations += 1
        stats.krylov += krylov.iterations
        stats.lin_u += operator.iterations_u
        stats.lin_c += operator.iterations_c
        record = GlobalIteration(
            iteration=iteration + 1,
            residual_norm=float(np.linalg.norm(residual)),
            merit=merit,
            alpha=search.alpha,
            correction_norm=correction_norm,
            krylov_iterations=krylov.iterations,
            krylov_residual=krylov.residual_norm,
            roundoff=search.roundoff,
        )
        stats.records.append(record)
        logger.debug(
            f"{config.label} it {record.iteration}: ||F|| = {record.residual_norm:.3e}"
            f", ||s|| = {correction_norm:.3e}, krylov its = {krylov.iterations}, "
            f"inner its u/c = {operator.iterations_u}/{operator.iterations_c}, "
            f"alpha = {search.alpha:.3g}"
        )
        small_step = np.linalg.norm(update) <= config.stol * np.linalg.norm(state.x)
        if config.stol > 0 and small_step:
            stats.residual_norm = record.residual_norm
            stats.converged = record.residual_norm <= tolerance
            stats.reason = "stol"
            break

    return state, stats
