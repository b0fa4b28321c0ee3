"""Step length selection and the descent safeguard."""

from __future__ import annotations

import logging
import warnings
from collections.abc import Callable

import numpy as np
from pydantic import BaseModel
from scipy.optimize import line_search
from scipy.optimize._linesearch import LineSearchWarning

from spinfrac.solvers.base import LineSearchError
from spinfrac.utils import FloatArray

logger = logging.getLogger(__name__)

MAX_BACKTRACKS = 40
MIN_STEP = 1e-12
# Merit changes below this multiple of machine precision are roundoff.
ROUNDOFF = 64.0 * np.finfo(np.float64).eps

Merit = Callable[[FloatArray], float]
Gradient = Callable[[FloatArray], FloatArray]


class LineSearchResult(BaseModel):
    """Accepted step length.

    ``wolfe`` is False when the step only satisfies sufficient decrease.
    ``roundoff`` is True when sufficient decrease only holds up to roundoff in
    the merit, so the merit may have grown by a few ulps.
    """

    alpha: float
    merit: float
    wolfe: bool
    evaluations: int
    roundoff: bool = False


def _cubic_backtracking(
    f: Merit,
    x: FloatArray,
    p: FloatArray,
    f0: float,
    slope: float,
    c1: float,
) -> LineSearchResult:
    """Backtrack with quadratic then cubic interpolation until Armijo holds.

    A step meeting the condition only within roundoff of ``f0`` is accepted
    with ``roundoff=True``.
    """
    slack = ROUNDOFF * max(abs(f0), 1.0)
    alpha, f_alpha = 1.0, f(x + p)
    alpha_prev, f_prev = alpha, f_alpha
    for evaluation in range(1, MAX_BACKTRACKS + 1):
        bound = f0 + c1 * alpha * slope
        if np.isfinite(f_alpha) and f_alpha <= bound + slack:
            roundoff = bool(f_alpha > bound)
            if roundoff:
                logger.debug(
                    f"Accepted alpha = {alpha:.3g} within roundoff of sufficient "
                    f"decrease (f - f0 = {f_alpha - f0:.3e})."
                )
            return LineSearchResult(
                alpha=alpha,
                merit=float(f_alpha),
                wolfe=False,
                evaluations=evaluation,
                roundoff=roundoff,
            )
        if not np.isfinite(f_alpha):
            trial = 0.1 * alpha
        elif evaluation == 1:
            trial = -slope / (2.0 * (f_alpha - f0 - slope))
        else:
            r1 = f_alpha - f0 - alpha * slope
            r2 = f_prev - f0 - alpha_prev * slope
            a = (r1 / alpha**2 - r2 / alpha_prev**2) / (alpha - alpha_prev)
            b = (-alpha_prev * r1 / alpha**2 + alpha * r2 / alpha_prev**2) / (
                alpha - alpha_prev
            )
            if a == 0.0:
                trial = -slope / (2.0 * b)
            else:
                disc = max(b * b - 3.0 * a * slope, 0.0)
                trial = (-b + np.sqrt(disc)) / (3.0 * a)
        trial = float(np.clip(trial, 0.1 * alpha, 0.5 * alpha))
        alpha_prev, f_prev = alpha, f_alpha
        alpha = trial
        if alpha < MIN_STEP:
            break
        f_alpha = f(x + alpha * p)
    raise LineSearchError(
        f"No step satisfying sufficient decrease after {MAX_BACKTRACKS} backtracks."
    )


def line_search_cubic(
    f: Merit,
    grad_f: Gradient,
    x: FloatArray,
    p: FloatArray,
    grad: FloatArray | None = None,
    f0: float | None = None,
    c1: float = 1e-4,
    c2: float = 0.9,
) -> LineSearchResult:
    """Find a step length along ``p`` satisfying the strong Wolfe conditions.

    The first trial is ``alpha = 1``. Bracketing and zoom use cubic
    interpolation. If no strong Wolfe point is found, cubic backtracking on
    the sufficient decrease condition alone is tried before giving up.

    Parameters
    ----------
    f
        Merit function.
    grad_f
        Its gradient.
    x
        Current iterate.
    p
        Search direction, must be a descent direction.
    grad
        ``grad_f(x)`` if already known.
    f0
        ``f(x)`` if already known.
    c1, c2
        Sufficient decrease and curvature constants, ``0 < c1 < c2 < 1``.

    Returns
    -------
    LineSearchResult
        Step length and merit at the accepted point.

    Raises
    ------
    LineSearchError
        If ``p`` is not a descent direction or no step is found.
    """
    grad = grad_f(x) if grad is None else grad
    f0 = f(x) if f0 is None else f0
    slope = float(grad @ p)
    if not slope < 0.0:
        raise LineSearchError(f"Not a descent direction (slope {slope:.3e}).")

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LineSearchWarning)
        alpha, n_f, _, f_alpha, _, _ = line_search(
            f,
            grad_f,
            x,
            p,
            gfk=grad,
            old_fval=f0,
            c1=c1,
            c2=c2,
            maxiter=MAX_BACKTRACKS,
        )
    if alpha is not None and alpha > MIN_STEP and f_alpha is not None:
        return LineSearchResult(
            alpha=float(alpha), merit=float(f_alpha), wolfe=True, evaluations=n_f
        )
    logger.warning("Strong Wolfe search failed, falling back to Armijo backtracking.")
    return _cubic_backtracking(f, x, p, f0, slope, c1)


def ensure_descent(
    p: FloatArray,
    grad: FloatArray,
    newton_fallback: FloatArray | Callable[[], FloatArray] | None = None,
) -> FloatArray:
    """Return a descent direction for a merit with gradient ``grad``.

    ``p`` is kept if ``<p, grad> < 0``, else the fallback direction (evaluated
    lazily when callable) if it descends, else ``-grad``. A zero gradient
    gives a zero direction.
    """
    if not np.any(grad):
        return np.zeros_like(p)
    if float(p @ grad) < 0.0:
        return p
    logger.warning("Search direction is not a descent direction, replacing it.")
    if newton_fallback is not None:
        fallback = newton_fallback() if callable(newton_fallback) else newton_fallback
        if float(fallback @ grad) < 0.0:
            return fallback
    return -grad
