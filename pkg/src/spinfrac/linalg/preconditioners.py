"""Preconditioners for the sparse Krylov solves."""

from __future__ import annotations

import logging

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import LinearOperator

from spinfrac.linalg.base import LinearSolverError, PreconditionerKind
from spinfrac.linalg.direct import DirectSolver
from spinfrac.utils import FloatArray, IntArray

logger = logging.getLogger(__name__)

JACOBI_DAMPING = 2.0 / 3.0
STRENGTH_THRESHOLD = 0.08
COARSE_SIZE = 64


def _inverse_diagonal(matrix: sparse.spmatrix) -> FloatArray:
    diagonal = np.asarray(matrix.diagonal(), dtype=np.float64)
    if np.any(diagonal == 0.0):
        raise ValueError("Jacobi preconditioning needs a zero-free diagonal.")
    return 1.0 / diagonal


def jacobi_preconditioner(matrix: sparse.spmatrix) -> LinearOperator:
    """Return ``v -> |D|^{-1} v`` with D the diagonal of ``matrix``.

    The absolute value keeps the operator symmetric positive definite when the
    diagonal has negative entries, where ``D^{-1}`` would be indefinite and
    MINRES could not use it. For a positive diagonal both coincide.

    Raises
    ------
    ValueError
        If a diagonal entry is zero.
    """
    inv_diag = np.abs(_inverse_diagonal(matrix))

    def apply(v: FloatArray) -> FloatArray:
        return inv_diag * np.ravel(v)

    return LinearOperator(matrix.shape, matvec=apply, dtype=np.float64)


def _aggregate(matrix: sparse.csr_matrix) -> IntArray:
    """Greedy plain aggregation on the strength graph.

    Returns the aggregate index of every row.
    """
    n = matrix.shape[0]
    diagonal = np.abs(matrix.diagonal())
    coo = matrix.tocoo()
    off = coo.row != coo.col
    rows, cols, vals = coo.row[off], coo.col[off], np.abs(coo.data[off])
    strong = vals >= STRENGTH_THRESHOLD * np.sqrt(diagonal[rows] * diagonal[cols])
    graph = sparse.csr_matrix(
        (np.ones(int(strong.sum())), (rows[strong], cols[strong])), shape=(n, n)
    )
    indptr, indices = graph.indptr, graph.indices

    aggregates = np.full(n, -1, dtype=np.int64)
    count = 0
    # Seed aggregates at nodes whose whole neighbourhood is still free.
    for i in range(n):
        if aggregates[i] >= 0:
            continue
        neighbours = indices[indptr[i] : indptr[i + 1]]
        if neighbours.size == 0 or np.any(aggregates[neighbours] >= 0):
            continue
        aggregates[i] = count
        aggregates[neighbours] = count
        count += 1
    # Attach leftovers to an adjacent aggregate.
    leftover = np.flatnonzero(aggregates < 0)
    for i in leftover:
        neighbours = indices[indptr[i] : indptr[i + 1]]
        taken = neighbours[aggregates[neighbours] >= 0]
        if taken.size:
            aggregates[i] = aggregates[taken[0]]
    # Isolated nodes become singletons.
    isolated = np.flatnonzero(aggregates < 0)
    aggregates[isolated] = count + np.arange(isolated.size)
    return aggregates


class AggregationHierarchy:
    """Plain-aggregation multigrid hierarchy applied as a symmetric V-cycle.

    Parameters
    ----------
    matrix
        Square sparse matrix with a zero-free diagonal.
    levels
        Maximum number of levels, including the finest one.
    sweeps
        Damped Jacobi sweeps before and after each coarse correction.
    """

    def __init__(
        self, matrix: sparse.spmatrix, levels: int = 4, sweeps: int = 2
    ) -> None:
        if levels < 1:
            raise ValueError("An aggregation hierarchy needs at least one level.")
        self.sweeps = sweeps
        self.operators: list[sparse.csr_matrix] = [sparse.csr_matrix(matrix)]
        self.inv_diagonals: list[FloatArray] = [_inverse_diagonal(matrix)]
        self.prolongations: list[sparse.csr_matrix] = []
        while len(self.operators) < levels:
            fine = self.operators[-1]
            if fine.shape[0] <= COARSE_SIZE:
                break
            aggregates = _aggregate(fine)
            n_coarse = int(aggregates.max()) + 1
            if n_coarse > 0.9 * fine.shape[0]:
                raise LinearSolverError(
                    f"Aggregation does not coarsen ({fine.shape[0]} -> {n_coarse})."
                )
            prolongation = sparse.csr_matrix(
                (np.ones(fine.shape[0]), (np.arange(fine.shape[0]), aggregates)),
                shape=(fine.shape[0], n_coarse),
            )
            coarse = sparse.csr_matrix(prolongation.T @ fine @ prolongation)
            self.prolongations.append(prolongation)
            self.operators.append(coarse)
            self.inv_diagonals.append(_inverse_diagonal(coarse))
        self.coarse_solver = (
            DirectSolver(self.operators[-1]) if self.n_levels > 1 else None
        )

    @property
    def n_levels(self) -> int:
        """Number of levels in use."""
        return len(self.operators)

    def _cycle(self, level: int, rhs: FloatArray) -> FloatArray:
        if level == self.n_levels - 1 and self.coarse_solver is not None:
            return self.coarse_solver.solve(rhs)
        operator = self.operators[level]
        inv_diag = self.inv_diagonals[level]
        x = JACOBI_DAMPING * inv_diag * rhs
        for _ in range(self.sweeps - 1):
            x += JACOBI_DAMPING * inv_diag * (rhs - operator @ x)
        prolongation = self.prolongations[level]
        x += prolongation @ self._cycle(
            level + 1, prolongation.T @ (rhs - operator @ x)
        )
        for _ in range(self.sweeps):
            x += JACOBI_DAMPING * inv_diag * (rhs - operator @ x)
        return x

    def apply(self, v: FloatArray) -> FloatArray:
        """One V-cycle from a zero initial guess."""
        rhs = np.ravel(v).astype(np.float64)
        if self.n_levels == 1:
            # A single level is one damped Jacobi sweep.
            return JACOBI_DAMPING * self.inv_diagonals[0] * rhs
        return self._cycle(0, rhs)

    def as_operator(self) -> LinearOperator:
        """Wrap ``apply`` for the scipy Krylov solvers."""
        return LinearOperator(
            self.operators[0].shape, matvec=self.apply, dtype=np.float64
        )


def aggregation_preconditioner(
    matrix: sparse.spmatrix, levels: int = 4
) -> LinearOperator:
    """Algebraic multigrid preconditioner with a Jacobi fallback.

    If the hierarchy cannot be built the Jacobi preconditioner is returned and
    a warning is logged.
    """
    try:
        hierarchy = AggregationHierarchy(matrix, levels=levels)
    except LinearSolverError as err:
        logger.warning(f"Aggregation setup failed ({err}), using Jacobi instead.")
        return jacobi_preconditioner(matrix)
    logger.debug(
        f"Aggregation hierarchy sizes: {[op.shape[0] for op in hierarchy.operators]}"
    )
    return hierarchy.as_operator()


def build_preconditioner(
    matrix: sparse.spmatrix, kind: PreconditionerKind, levels: int = 4
) -> LinearOperator | None:
    """Build the preconditioner named by ``kind`` (``None`` for ``"none"``)."""
    if kind == "none":
        return None
    if kind == "jacobi":
        return jacobi_preconditioner(matrix)
    return aggregation_preconditioner(matrix, levels=levels)
