import numpy as np
import pytest
from pydantic import ValidationError
from scipy import sparse
from spinfrac.solvers import (
    NewtonConfig,
    NewtonError,
    NonlinearProblem,
    linear_step,
    newton_solve,
)

RHS = np.array([1.0, -2.0, 10.0, 0.5])


def cubic_problem(rhs=RHS):
    """Gradient system of sum(x^4 / 4 + x^2 / 2 - b x)."""
    return NonlinearProblem(
        residual=lambda x: x**3 + x - rhs,
        jacobian=lambda x: sparse.diags(3.0 * x**2 + 1.0, format="csr"),
        merit=lambda x: float(np.sum(0.25 * x**4 + 0.5 * x**2 - rhs * x)),
        name="cubic",
    )


def quadratic_problem():
    matrix = sparse.csr_matrix(
        sparse.diags([-1.0, 4.0, -1.0], [-1, 0, 1], shape=(30, 30))
    )
    rhs = np.linspace(-1.0, 1.0, 30)
    problem = NonlinearProblem(
        residual=lambda x: matrix @ x - rhs,
        jacobian=lambda x: matrix,
        merit=lambda x: float(0.5 * x @ (matrix @ x) - rhs @ x),
    )
    return problem, matrix, rhs


@pytest.mark.parametrize("variant", ["ND", "NK", "INK"])
def test_newton_cubic(variant):
    result = newton_solve(cubic_problem(), np.zeros(4), NewtonConfig(variant=variant))
    x = result.x
    assert result.stats.converged
    assert result.stats.reason == "residual"
    assert np.linalg.norm(x**3 + x - RHS) <= 1e-6 * np.linalg.norm(RHS)
    assert result.stats.linear_iterations >= result.stats.iterations
    assert result.first_jacobian is not None
    assert len(result.stats.records) == result.stats.iterations
    merits = [record.merit for record in result.stats.records]
    assert all(b <= a + 1e-12 for a, b in zip(merits[:-1], merits[1:]))


def test_newton_quadratic_one_step():
    problem, matrix, rhs = quadratic_problem()
    result = newton_solve(problem, np.zeros(30), NewtonConfig(variant="ND"))
    assert result.stats.iterations == 1
    assert result.stats.linear_iterations == 1
    assert result.stats.records[0].alpha == pytest.approx(1.0)
    assert np.allclose(matrix @ result.x, rhs, atol=1e-10)


def test_newton_already_converged():
    x0 = np.array([0.5, -0.5])
    rhs = x0**3 + x0
    result = newton_solve(cubic_problem(rhs), x0, NewtonConfig())
    assert result.stats.converged
    assert result.stats.iterations == 0
    assert result.first_jacobian is None


def test_newton_iteration_limit():
    config = NewtonConfig(variant="ND", max_iters=1)
    with pytest.raises(NewtonError, match="cubic: no convergence"):
        newton_solve(cubic_problem(), np.full(4, 10.0), config)


def test_newton_step_tolerance():
    config = NewtonConfig(
        variant="ND", stol=0.5, eps_abs_sub_nonl=0.0, eps_rel_sub_nonl=0.0
    )
    result = newton_solve(cubic_problem(), np.zeros(4), config)
    # Stopped on the step size, the zero residual tolerance is not met.
    assert result.stats.reason == "stol"
    assert not result.stats.converged
    assert result.stats.residual_norm > 0.0


def test_linear_step_direct():
    _, matrix, rhs = quadratic_problem()
    step, iterations = linear_step(matrix, -rhs, NewtonConfig(variant="ND"))
    assert iterations == 1
    assert np.allclose(matrix @ step, rhs)


def test_linear_step_direct_fallback():
    _, matrix, rhs = quadratic_problem()
    config = NewtonConfig(
        variant="NK", max_linear_iters=1, preconditioner="none", eps_abs_lin=0.0
    )
    step, iterations = linear_step(matrix, -rhs, config)
    # One Krylov iteration, then the direct solve.
    assert iterations == 2
    assert np.allclose(matrix @ step, rhs)
    with pytest.raises(NewtonError, match="did not converge"):
        linear_step(
            matrix, -rhs, config.model_copy(update={"direct_fallback": False})
        )


def test_linear_step_singular():
    matrix = sparse.csr_matrix((3, 3))
    with pytest.raises(NewtonError, match="Direct linear solve failed"):
        linear_step(matrix, np.ones(3), NewtonConfig(variant="ND"))


def test_newton_config():
    assert NewtonConfig(variant="INK", eta=1e-3).krylov_spec().rel_tol == 1e-3
    assert NewtonConfig(variant="NK", eps_rel_lin=1e-7).krylov_spec().rel_tol == 1e-7
    with pytest.raises(ValidationError):
        NewtonConfig(wolfe_c1=0.9, wolfe_c2=0.5)


def test_inexact_newton_forcing():
    matrix = sparse.csr_matrix(
        sparse.diags([-1.0, 3.0, -1.0], [-1, 0, 1], shape=(40, 40))
    )
    rhs = np.sin(np.linspace(0.0, 6.0, 40)) * 5.0
    problem = NonlinearProblem(
        residual=lambda x: matrix @ x + x**3 - rhs,
        jacobian=lambda x: sparse.csr_matrix(matrix + sparse.diags(3.0 * x**2)),
        merit=lambda x: float(0.5 * x @ (matrix @ x) + 0.25 * np.sum(x**4) - rhs @ x),
        name="tridiagonal",
    )
    config = NewtonConfig(variant="INK", eta=1e-2, preconditioner="none")
    result = newton_solve(problem, np.zeros(40), config)

    assert result.stats.converged
    assert result.stats.iterations >= 2
    norms = [result.stats.residual_norm0] + [
        record.residual_norm for record in result.stats.records
    ]
    for norm, record in zip(norms[:-1], result.stats.records):
        bound = max(config.eta * norm, config.eps_abs_lin)
        assert record.linear_residual <= bound * (1.0 + 1e-8)
