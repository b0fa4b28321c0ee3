"""Q1 reference element, degrees of freedom and sparse assembly."""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Sequence
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import sparse

from spinfrac.mesh import QuadMesh
from spinfrac.utils import BoolArray, FloatArray, IntArray

logger = logging.getLogger(__name__)

FieldName = Literal["u", "c"]
ElementKernel = Callable[["ElementGeometry"], FloatArray]

# Reference corners in counter-clockwise order starting at (-1, -1).
REFERENCE_CORNERS = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])


class Quadrature(BaseModel):
    """Quadrature rule on the reference square [-1, 1]^2."""

    points: FloatArray
    weights: FloatArray

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @model_validator(mode="after")
    def check_rule(self) -> Quadrature:
        """Weights must integrate the constant 1 to the reference area."""
        if self.points.shape != (self.weights.size, 2):
            raise ValueError("Quadrature points must have shape (n_points, 2).")
        if not math.isclose(float(self.weights.sum()), 4.0, rel_tol=1e-14):
            raise ValueError("Quadrature weights must sum to 4.")
        return self


def gauss_2x2() -> Quadrature:
    """Tensor Gauss rule with points at +-1/sqrt(3) and unit weights."""
    g = 1.0 / math.sqrt(3.0)
    points = np.array([[-g, -g], [g, -g], [g, g], [-g, g]])
    return Quadrature(points=points, weights=np.ones(4))


def shape_eval(xi: float, eta: float) -> tuple[FloatArray, FloatArray]:
    """Evaluate the bilinear shape functions at a reference point.

    Parameters
    ----------
    xi, eta
        Reference coordinates in [-1, 1].

    Returns
    -------
    values : FloatArray
        The four shape function values.
    gradients : FloatArray
        Reference gradients, shape (4, 2).
    """
    sx, sy = REFERENCE_CORNERS[:, 0], REFERENCE_CORNERS[:, 1]
    values = 0.25 * (1.0 + sx * xi) * (1.0 + sy * eta)
    gradients = 0.25 * np.column_stack([sx * (1.0 + sy * eta), sy * (1.0 + sx * xi)])
    return values, gradients


class DofMap(BaseModel):
    """Degree-of-freedom layout and Dirichlet constraints.

    Displacement dofs come first, node-major with x before y, followed by one
    phase-field dof per node. Constraints use these global indices.
    """

    n_nodes: int
    constrained_dofs: IntArray = Field(
        default_factory=lambda: np.zeros(0, dtype=np.int64)
    )
    constrained_values: FloatArray = Field(default_factory=lambda: np.zeros(0))

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @model_validator(mode="after")
    def check_constraints(self) -> DofMap:
        """Each constrained dof must exist and appear once."""
        dofs = self.constrained_dofs
        if dofs.shape != self.constrained_values.shape:
            raise ValueError("Constraint dofs and values differ in length.")
        if dofs.size and (dofs.min() < 0 or dofs.max() >= self.size):
            raise ValueError("Constraint on a nonexistent dof.")
        if np.unique(dofs).size != dofs.size:
            raise ValueError("A dof is constrained more than once.")
        return self

    @property
    def n_u(self) -> int:
        """Number of displacement dofs."""
        return 2 * self.n_nodes

    @property
    def n_c(self) -> int:
        """Number of phase-field dofs."""
        return self.n_nodes

    @property
    def size(self) -> int:
        """Total number of dofs."""
        return 3 * self.n_nodes

    @property
    def index_u(self) -> IntArray:
        """Field-split index set of the displacement."""
        return np.arange(self.n_u, dtype=np.int64)

    @property
    def index_c(self) -> IntArray:
        """Field-split index set of the phase field."""
        return np.arange(self.n_u, self.size, dtype=np.int64)

    def u_dof(self, node: int | IntArray, component: int) -> IntArray:
        """Global index of a displacement component."""
        return 2 * np.asarray(node, dtype=np.int64) + component

    def c_dof(self, node: int | IntArray) -> IntArray:
        """Global index of a phase-field value."""
        return self.n_u + np.asarray(node, dtype=np.int64)

    def with_constraints(
        self, dofs: Sequence[int] | IntArray, values: Sequence[float] | FloatArray
    ) -> DofMap:
        """Return a copy carrying the given constraint list."""
        return DofMap(
            n_nodes=self.n_nodes,
            constrained_dofs=np.asarray(dofs, dtype=np.int64).ravel(),
            constrained_values=np.asarray(values, dtype=np.float64).ravel(),
        )

    def field_constraints(
        self, field: FieldName | Literal["all"]
    ) -> tuple[IntArray, FloatArray]:
        """Constraint list restricted to one field, in field-local numbering."""
        dofs, values = self.constrained_dofs, self.constrained_values
        if field == "all":
            return dofs, values
        if field == "u":
            keep = dofs < self.n_u
            return dofs[keep], values[keep]
        keep = dofs >= self.n_u
        return dofs[keep] - self.n_u, values[keep]

    def constrained_mask(
        self, field: FieldName | Literal["all"] = "all"
    ) -> BoolArray:
        """Boolean mask of constrained dofs of ``field``."""
        size = {"all": self.size, "u": self.n_u, "c": self.n_c}[field]
        mask = np.zeros(size, dtype=bool)
        mask[self.field_constraints(field)[0]] = True
        return mask


def element_dofs(mesh: QuadMesh, field: FieldName) -> IntArray:
    """Field-local dof indices per element.

    Displacement dofs are interleaved ``[u0x, u0y, u1x, ...]`` (shape
    ``(n_elements, 8)``), phase-field dofs are the node indices.
    """
    if field == "c":
        return mesh.elements
    dofs = np.empty((mesh.n_elements, 8), dtype=np.int64)
    dofs[:, 0::2] = 2 * mesh.elements
    dofs[:, 1::2] = 2 * mesh.elements + 1
    return dofs


class ElementGeometry(BaseModel):
    """Shape functions mapped to every element at every quadrature point."""

    values: FloatArray  # (q, 4)
    gradients: FloatArray  # (m, q, 4, 2), physical
    weights: FloatArray  # (m, q), quadrature weight times det J

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @classmethod
    def from_mesh(
        cls, mesh: QuadMesh, quadrature: Quadrature | None = None
    ) -> ElementGeometry:
        """Precompute the geometry of every element.

        Raises
        ------
        ValueError
            If an element has a nonpositive Jacobian determinant.
        """
        quadrature = gauss_2x2() if quadrature is None else quadrature
        tables = [shape_eval(xi, eta) for xi, eta in quadrature.points]
        values = np.stack([t[0] for t in tables])
        ref_gradients = np.stack([t[1] for t in tables])
        corners = mesh.node_coords[mesh.elements]
        # jac[m, q, i, j] = d x_i / d xi_j
        jac = np.einsum("mai,qaj->mqij", corners, ref_gradients)
        det = jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]
        if np.any(det <= 0.0):
            raise ValueError("Element with nonpositive Jacobian determinant.")
        inv = np.empty_like(jac)
        inv[..., 0, 0] = jac[..., 1, 1] / det
        inv[..., 1, 1] = jac[..., 0, 0] / det
        inv[..., 0, 1] = -jac[..., 0, 1] / det
        inv[..., 1, 0] = -jac[..., 1, 0] / det
        gradients = np.einsum("qaj,mqji->mqai", ref_gradients, inv)
        return cls(
            values=values,
            gradients=gradients,
            weights=det * quadrature.weights[None, :],
        )

    @property
    def n_elements(self) -> int:
        """Number of elements."""
        return int(self.weights.shape[0])

    def strain_operator(self) -> FloatArray:
        """Voigt strain-displacement matrices, shape (m, q, 3, 8).

        Rows are ``[e_xx, e_yy, 2 e_xy]`` acting on interleaved element dofs.
        """
        dx, dy = self.gradients[..., 0], self.gradients[..., 1]
        b = np.zeros(self.gradients.shape[:2] + (3, 8))
        b[..., 0, 0::2] = dx
        b[..., 1, 1::2] = dy
        b[..., 2, 0::2] = dy
        b[..., 2, 1::2] = dx
        return b


def assemble_matrix(
    row_dofs: IntArray,
    col_dofs: IntArray,
    local: FloatArray,
    shape: tuple[int, int],
) -> sparse.csr_matrix:
    """Scatter element matrices into a CSR matrix (duplicates summed)."""
    m, a, b = local.shape
    if row_dofs.shape != (m, a) or col_dofs.shape != (m, b):
        raise ValueError(
            f"Element matrices of shape {local.shape[1:]} do not match"
            f" {row_dofs.shape[1]}x{col_dofs.shape[1]} element dofs."
        )
    rows = np.broadcast_to(row_dofs[:, :, None], local.shape).ravel()
    cols = np.broadcast_to(col_dofs[:, None, :], local.shape).ravel()
    matrix = sparse.csr_matrix((local.ravel(), (rows, cols)), shape=shape)
    matrix.sum_duplicates()
    matrix.sort_indices()
    return matrix


def assemble_vector(dofs: IntArray, local: FloatArray, size: int) -> FloatArray:
    """Scatter element vectors into a dense vector."""
    if local.shape != dofs.shape:
        raise ValueError(
            f"Element vectors of length {local.shape[-1]} do not match"
            f" {dofs.shape[1]} element dofs."
        )
    return np.bincount(dofs.ravel(), weights=local.ravel(), minlength=size)


def assemble(
    mesh: QuadMesh,
    dofmap: DofMap,
    element_kernel: ElementKernel,
    field: FieldName = "c",
    geometry: ElementGeometry | None = None,
) -> sparse.csr_matrix | FloatArray:
    """Assemble a field block from a per-element kernel.

    Parameters
    ----------
    mesh
        The mesh.
    dofmap
        Dof layout, used for the block size.
    element_kernel
        Callable returning element matrices ``(m, k, k)`` or vectors ``(m, k)``
        from the element geometry.
    field
        Which field the kernel acts on.
    geometry
        Precomputed geometry, built from ``mesh`` when omitted.

    Returns
    -------
    sparse.csr_matrix | FloatArray
        Assembled matrix or vector.

    Raises
    ------
    ValueError
        If the kernel output does not fit the element dofs of ``field``.
    """
    geometry = ElementGeometry.from_mesh(mesh) if geometry is None else geometry
    dofs = element_dofs(mesh, field)
    size = dofmap.n_u if field == "u" else dofmap.n_c
    local = np.asarray(element_kernel(geometry), dtype=np.float64)
    if local.ndim == 3:
        return assemble_matrix(dofs, dofs, local, (size, size))
    if local.ndim == 2:
        return assemble_vector(dofs, local, size)
    raise ValueError(f"Kernel returned an array of dimension {local.ndim}.")


def constrain_matrix(matrix: sparse.spmatrix, mask: BoolArray) -> sparse.csr_matrix:
    """Zero the masked rows and columns and put 1 on their diagonal."""
    keep = sparse.diags((~mask).astype(np.float64))
    constrained = keep @ matrix @ keep + sparse.diags(mask.astype(np.float64))
    constrained = sparse.csr_matrix(constrained)
    constrained.sort_indices()
    return constrained


def apply_dirichlet(
    matrix: sparse.spmatrix,
    rhs: FloatArray,
    dofmap: DofMap,
    field: FieldName | Literal["all"] = "all",
) -> tuple[sparse.csr_matrix, FloatArray]:
    """Impose Dirichlet values by symmetric elimination.

    Parameters
    ----------
    matrix
        Square system matrix of ``field``.
    rhs
        Right-hand side.
    dofmap
        Source of the constraint list.
    field
        ``"all"`` for a monolithic system, ``"u"`` or ``"c"`` for a block.

    Returns
    -------
    tuple[sparse.csr_matrix, FloatArray]
        Constrained matrix (still symmetric if the input was) and right-hand
        side whose solution takes the prescribed values.

    Raises
    ------
    ValueError
        If the system is not square or does not match the rhs or the dofmap.
    """
    n_rows, n_cols = matrix.shape
    if n_rows != n_cols or rhs.shape != (n_rows,):
        raise ValueError("Matrix must be square and conformal with the rhs.")
    dofs, values = dofmap.field_constraints(field)
    if dofs.size and dofs.max() >= n_rows:
        raise ValueError("Constraint on a nonexistent dof.")
    if not dofs.size:
        return sparse.csr_matrix(matrix), rhs.copy()
    prescribed = np.zeros(n_rows)
    prescribed[dofs] = values
    mask = np.zeros(n_rows, dtype=bool)
    mask[dofs] = True
    new_rhs = rhs - matrix @ prescribed
    new_rhs[mask] = prescribed[mask]
    return constrain_matrix(matrix, mask), new_rhs


def mass_kernel(geometry: ElementGeometry) -> FloatArray:
    """Scalar mass matrices."""
    n = geometry.values
    return np.einsum("mq,qa,qb->mab", geometry.weights, n, n)


def laplace_kernel(geometry: ElementGeometry) -> FloatArray:
    """Scalar stiffness matrices of the Laplacian."""
    g = geometry.gradients
    return np.einsum("mq,mqai,mqbi->mab", geometry.weights, g, g)


def elasticity_kernel(lmbda: float, mu: float) -> ElementKernel:
    """Linear isotropic plane-strain stiffness as an element kernel."""
    d = np.array(
        [[lmbda + 2 * mu, lmbda, 0.0], [lmbda, lmbda + 2 * mu, 0.0], [0.0, 0.0, mu]]
    )

    def kernel(geometry: ElementGeometry) -> FloatArray:
        b = geometry.strain_operator()
        return np.einsum("mq,mqia,ij,mqjb->mab", geometry.weights, b, d, b)

    return kernel
