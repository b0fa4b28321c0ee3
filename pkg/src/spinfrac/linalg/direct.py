"""Sparse LU with a dense fallback for small systems."""

from __future__ import annotations

import warnings

import numpy as np
import scipy.linalg
from scipy import sparse
from scipy.sparse.linalg import splu

from spinfrac.config import get_settings
from spinfrac.linalg.base import LinearSolverError, SingularMatrixError
from spinfrac.utils import FloatArray


class DirectSolver:
    """LU factorization of a square matrix, reusable for many right-hand sides.

    Parameters
    ----------
    matrix
        Square sparse (or dense) matrix.
    dense_threshold
        Systems with fewer unknowns are factorized densely. Defaults to the
        ``linear.direct_dense_threshold`` setting.

    Raises
    ------
    SingularMatrixError
        If a pivot is zero.
    """

    def __init__(
        self, matrix: sparse.spmatrix | FloatArray, dense_threshold: int | None = None
    ) -> None:
        if matrix.shape[0] != matrix.shape[1]:
            raise ValueError("Direct solve needs a square matrix.")
        if dense_threshold is None:
            dense_threshold = get_settings().linear.direct_dense_threshold
        self.size = int(matrix.shape[0])
        self.dense = self.size < dense_threshold
        if self.dense:
            array = matrix.toarray() if sparse.issparse(matrix) else np.asarray(matrix)
            with warnings.catch_warnings():
                warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
                try:
                    self._lu = scipy.linalg.lu_factor(array)
                except (scipy.linalg.LinAlgWarning, ValueError) as err:
                    raise SingularMatrixError(f"Dense LU failed: {err}") from err
            pivots = np.abs(np.diag(self._lu[0]))
            if pivots.size and pivots.min() <= 1e-14 * pivots.max():
                raise SingularMatrixError("Matrix is numerically singular.")
        else:
            try:
                # COLAMD is a fill-reducing column ordering.
                self._splu = splu(sparse.csc_matrix(matrix), permc_spec="COLAMD")
            except RuntimeError as err:
                raise SingularMatrixError(f"Sparse LU failed: {err}") from err

    def solve(self, rhs: FloatArray) -> FloatArray:
        """Solve for one right-hand side."""
        if rhs.shape != (self.size,):
            raise ValueError("Right-hand side does not match the factorized matrix.")
        if self.dense:
            x = scipy.linalg.lu_solve(self._lu, rhs)
        else:
            x = self._splu.solve(rhs)
        if not np.all(np.isfinite(x)):
            raise LinearSolverError("Direct solve produced non-finite values.")
        return np.asarray(x, dtype=np.float64)


def direct_solve(
    matrix: sparse.spmatrix | FloatArray, rhs: FloatArray
) -> FloatArray:
    """Factorize and solve once."""
    return DirectSolver(matrix).solve(rhs)
