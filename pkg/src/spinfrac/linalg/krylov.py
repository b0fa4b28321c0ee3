"""Preconditioned Krylov solves on top of ``scipy.sparse.linalg``."""

from __future__ import annotations

import logging
from collections.abc import Callable
from typing import Any

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import (
    LinearOperator,
    aslinearoperator,
    bicgstab,
    cg,
    gmres,
    minres,
)

from spinfrac.linalg.base import KrylovBreakdownError, KrylovResult, KrylovSpec
from spinfrac.linalg.preconditioners import build_preconditioner
from spinfrac.utils import FloatArray

logger = logging.getLogger(__name__)

# scipy checks its own (possibly preconditioned or recursive) residual, so the
# true residual is verified afterwards and the solve resumed if needed.
MAX_RESTARTS = 4


def _run_method(
    spec: KrylovSpec,
    operator: LinearOperator,
    rhs: FloatArray,
    x0: FloatArray,
    preconditioner: LinearOperator | None,
    atol: float,
    budget: int,
    history: list[float],
) -> tuple[FloatArray, int, int]:
    """Call the scipy method once.

    Returns the iterate, the number of iterations and scipy's info code.
    """
    n = rhs.size
    iterations = 0

    def count(_: Any) -> None:
        nonlocal iterations
        iterations += 1

    def count_gmres(pr_norm: float) -> None:
        nonlocal iterations
        iterations += 1
        history.append(float(pr_norm))

    callback: Callable[..., None] = count
    kwargs: dict[str, Any] = {"x0": x0, "M": preconditioner}
    if spec.method == "cg":
        solver: Callable[..., tuple[FloatArray, int]] = cg
        kwargs.update(rtol=0.0, atol=atol, maxiter=budget)
    elif spec.method == "bcgstab":
        solver = bicgstab
        kwargs.update(rtol=0.0, atol=atol, maxiter=budget)
    elif spec.method == "minres":
        # MINRES only takes a relative tolerance.
        solver = minres
        rhs_norm = float(np.linalg.norm(rhs))
        kwargs.update(rtol=atol / rhs_norm, maxiter=budget)
    else:
        solver = gmres
        restart = max(1, min(spec.restart, budget, n))
        callback = count_gmres
        kwargs.update(
            rtol=0.0,
            atol=atol,
            restart=restart,
            maxiter=max(1, budget // restart),
            callback_type="pr_norm",
        )
    x, info = solver(operator, rhs, callback=callback, **kwargs)
    return np.asarray(x, dtype=np.float64), iterations, int(info)


def _gmres_on_estimate(
    spec: KrylovSpec,
    operator: LinearOperator,
    rhs: FloatArray,
    x: FloatArray,
    preconditioner: LinearOperator | None,
    target: float,
) -> KrylovResult:
    """Restarted GMRES stopped on its Arnoldi residual estimate.

    scipy recomputes ``b - A x`` after every cycle and keeps iterating until that
    meets the tolerance, which an approximately applied operator may never do.
    Running one cycle per call and testing the estimate avoids that floor.
    """
    rhs_norm = float(np.linalg.norm(rhs))
    # scipy reports the preconditioned residual over ||b||.
    scale = rhs_norm
    if preconditioner is not None:
        scale *= rhs_norm / float(np.linalg.norm(preconditioner @ rhs))
    history: list[float] = []
    iterations = 0
    estimate = float("inf")
    converged = False
    while iterations < spec.max_iters:
        cycle = min(spec.restart, spec.max_iters - iterations, rhs.size)
        x, used, info = _run_method(
            spec, operator, rhs, x, preconditioner, target, cycle, history
        )
        if info < 0:
            raise KrylovBreakdownError(
                f"gmres broke down after {iterations} iterations (info={info})."
            )
        if used == 0:
            # Returned before iterating: the recomputed residual already passed.
            estimate = float(np.linalg.norm(rhs - operator @ x))
            converged = True
            break
        iterations += used
        estimate = history[-1] * scale
        if not np.isfinite(estimate):
            raise KrylovBreakdownError("gmres produced non-finite values.")
        if estimate <= target or info == 0:
            converged = True
            break

    if not converged:
        logger.debug(
            f"gmres stopped after {iterations} iterations with estimated residual "
            f"{estimate:.3e} > {target:.3e}"
        )
    return KrylovResult(
        x=x,
        iterations=iterations,
        converged=converged,
        residual_norm=estimate,
        history=history,
    )


def krylov_solve(
    matrix: sparse.spmatrix | LinearOperator,
    rhs: FloatArray,
    spec: KrylovSpec,
    x0: FloatArray | None = None,
    preconditioner: LinearOperator | None = None,
) -> KrylovResult:
    """Solve ``A x = b`` with the method and tolerances of ``spec``.

    Parameters
    ----------
    matrix
        Sparse matrix or matrix-free operator.
    rhs
        Right-hand side ``b``.
    spec
        Method, tolerances, iteration cap and preconditioner kind.
    x0
        Initial guess, zero by default.
    preconditioner
        Explicit preconditioner. If omitted and ``matrix`` is sparse, the one
        named by ``spec.preconditioner`` is built.

    Returns
    -------
    KrylovResult
        Solution, iteration count and convergence flag. Non-convergence within
        ``spec.max_iters`` is reported through ``converged=False``. The
        residual is verified on ``b - A x`` unless GMRES runs with
        ``spec.verify_residual=False``.

    Raises
    ------
    KrylovBreakdownError
        If the recurrence breaks down before convergence.
    """
    operator = aslinearoperator(matrix)
    if operator.shape != (rhs.size, rhs.size):
        raise ValueError("Operator and right-hand side sizes do not match.")
    x = np.zeros(rhs.size) if x0 is None else np.array(x0, dtype=np.float64)
    target = max(spec.rel_tol * float(np.linalg.norm(rhs)), spec.abs_tol)
    residual_norm = float(np.linalg.norm(rhs - operator @ x))
    history: list[float] = []
    iterations = 0
    if residual_norm <= target:
        return KrylovResult(
            x=x, iterations=0, converged=True, residual_norm=residual_norm
        )
    if preconditioner is None and sparse.issparse(matrix):
        preconditioner = build_preconditioner(
            matrix, spec.preconditioner, spec.aggregation_levels
        )
    if spec.method == "gmres" and not spec.verify_residual:
        return _gmres_on_estimate(spec, operator, rhs, x, preconditioner, target)

    atol = target
    for _ in range(MAX_RESTARTS):
        budget = spec.max_iters - iterations
        if budget <= 0:
            break
        x, used, info = _run_method(
            spec, operator, rhs, x, preconditioner, atol, budget, history
        )
        # BCGSTAB may stop halfway through its first iteration without a callback.
        iterations += max(used, 1)
        residual_norm = float(np.linalg.norm(rhs - operator @ x))
        if residual_norm <= target:
            break
        if info < 0:
            raise KrylovBreakdownError(
                f"{spec.method} broke down after {iterations} iterations "
                f"(info={info}, residual {residual_norm:.3e})."
            )
        if info > 0 and iterations >= spec.max_iters:
            break
        if not np.isfinite(residual_norm):
            raise KrylovBreakdownError(f"{spec.method} produced non-finite values.")
        # Internal residual met the tolerance but the true one did not.
        atol *= 0.5 * target / residual_norm

    converged = residual_norm <= target
    if not converged:
        logger.debug(
            f"{spec.method} stopped after {iterations} iterations with residual "
            f"{residual_norm:.3e} > {target:.3e}"
        )
    return KrylovResult(
        x=x,
        iterations=iterations,
        converged=converged,
        residual_norm=residual_norm,
        history=history,
    )
