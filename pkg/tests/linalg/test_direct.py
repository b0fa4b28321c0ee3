import numpy as np
import pytest
from scipy import sparse
from spinfrac.linalg import DirectSolver, SingularMatrixError, direct_solve


def _system(n, seed):
    rng = np.random.default_rng(seed)
    mask = rng.random((n, n)) < 0.1
    matrix = np.where(mask, rng.standard_normal((n, n)), 0.0) + 4 * np.eye(n)
    return sparse.csr_matrix(matrix), rng.standard_normal(n)


@pytest.mark.parametrize("dense_threshold", [0, 10_000])
def test_direct_solver(dense_threshold):
    """Sparse and dense factorizations agree with numpy."""
    matrix, rhs = _system(50, 3)
    solver = DirectSolver(matrix, dense_threshold=dense_threshold)
    assert solver.dense is (dense_threshold > 50)
    expected = np.linalg.solve(matrix.toarray(), rhs)
    assert np.allclose(solver.solve(rhs), expected, rtol=1e-12, atol=1e-12)
    # The factorization is reused.
    assert np.allclose(solver.solve(2 * rhs), 2 * expected, rtol=1e-12, atol=1e-12)


def test_direct_solve_dense_array():
    matrix = np.array([[2.0, 1.0], [1.0, 3.0]])
    assert np.allclose(direct_solve(matrix, np.array([3.0, 4.0])), [1.0, 1.0])


@pytest.mark.parametrize("dense_threshold", [0, 10_000])
def test_singular_matrix(dense_threshold):
    matrix = sparse.csr_matrix(
        np.array([[1.0, 2.0, 0.0], [2.0, 4.0, 0.0], [0.0, 0.0, 1.0]])
    )
    with pytest.raises(SingularMatrixError):
        DirectSolver(matrix, dense_threshold=dense_threshold)


def test_direct_solver_errors():
    with pytest.raises(ValueError, match="square"):
        DirectSolver(sparse.csr_matrix(np.ones((2, 3))))
    solver = DirectSolver(sparse.eye(3, format="csr"))
    with pytest.raises(ValueError):
        solver.solve(np.ones(4))


def test_dense_threshold_from_settings(monkeypatch):
    from spinfrac.config import get_settings

    monkeypatch.setenv("SPINFRAC__LINEAR__DIRECT_DENSE_THRESHOLD", "0")
    get_settings.cache_clear()
    assert not DirectSolver(sparse.eye(3, format="csr")).dense
