"""AT-2 phase-field fracture model with a spectral split of the strain.

The regularized energy of a state ``(u, c)`` with history ``c_prev`` is

    Psi = int (1 - c)^2 psi+(eps) + psi-(eps)
        + G_c / 2 int (c^2 / l_s + l_s |grad c|^2)
        + gamma / 2 int <c - c_prev>_-^2

where the last term penalizes healing. Residuals and Jacobian blocks are its
exact first and second derivatives, integrated with the same quadrature.
"""

from __future__ import annotations

import logging
from typing import NamedTuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, computed_field, model_validator
from scipy import sparse
from scipy.sparse.linalg import LinearOperator

from spinfrac.fem import (
    DofMap,
    ElementGeometry,
    assemble_matrix,
    assemble_vector,
    constrain_matrix,
    element_dofs,
)
from spinfrac.mesh import QuadMesh
from spinfrac.utils import (
    FloatArray,
    heaviside_minus,
    heaviside_plus,
    ramp_minus,
    ramp_plus,
)

logger = logging.getLogger(__name__)

# Eigenvalue gap below which the split tangent uses its coincident limit.
DEGENERATE_GAP = 1e-8

VOIGT_IDENTITY = np.array([1.0, 1.0, 0.0])


def penalty_gamma(g_c: float, l_s: float, tau_irr: float) -> float:
    """Penalty parameter that bounds healing per step by ``tau_irr``.

    Parameters
    ----------
    g_c
        Critical energy release rate in kN/mm.
    l_s
        Length scale in mm.
    tau_irr
        Accepted decrease of the phase field, in (0, 1).

    Returns
    -------
    float
        ``g_c / l_s * (1 / tau_irr**2 - 1)`` in kN/mm^3.

    Raises
    ------
    ValueError
        For nonpositive inputs or ``tau_irr >= 1``.
    """
    if g_c <= 0 or l_s <= 0 or tau_irr <= 0:
        raise ValueError("g_c, l_s and tau_irr must be positive.")
    if tau_irr >= 1:
        raise ValueError("tau_irr must be below 1, otherwise the penalty vanishes.")
    return g_c / l_s * (1.0 / tau_irr**2 - 1.0)


class MaterialParams(BaseModel):
    """Plane-strain Lame constants and AT-2 fracture parameters."""

    lmbda: float
    mu: float = Field(gt=0)
    g_c: float = Field(gt=0)
    l_s: float = Field(gt=0)
    tau_irr: float = Field(1e-2, gt=0, lt=1)
    c_omega: float = 2.0

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def check_bulk(self) -> MaterialParams:
        """Require a positive plane bulk modulus lambda + mu."""
        if self.lmbda + self.mu <= 0:
            raise ValueError("lambda + 2 mu / d must be positive.")
        return self

    @computed_field  # type: ignore[prop-decorator]
    @property
    def gamma(self) -> float:
        """Irreversibility penalty, derived from the other parameters."""
        return penalty_gamma(self.g_c, self.l_s, self.tau_irr)

    def with_length_scale(self, l_s: float) -> MaterialParams:
        """Copy with another length scale (the penalty follows).

        Raises
        ------
        ValueError
            If ``l_s`` is not positive.
        """
        if l_s <= 0:
            raise ValueError("Length scale must be positive.")
        return self.model_copy(update={"l_s": l_s})


class SystemState(BaseModel):
    """Nodal coefficients of one loading step."""

    U: FloatArray
    C: FloatArray
    C_prev: FloatArray
    t: float = 0.0

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @model_validator(mode="after")
    def check_lengths(self) -> SystemState:
        """Fields must describe the same number of nodes."""
        if self.U.shape != (2 * self.C.size,) or self.C.shape != self.C_prev.shape:
            raise ValueError("U, C and C_prev have inconsistent lengths.")
        return self

    @classmethod
    def zeros(cls, dofmap: DofMap, t: float = 0.0) -> SystemState:
        """Undeformed and undamaged state."""
        n = dofmap.n_c
        return cls(U=np.zeros(2 * n), C=np.zeros(n), C_prev=np.zeros(n), t=t)

    @property
    def x(self) -> FloatArray:
        """Stacked vector ``[U; C]``."""
        return np.concatenate([self.U, self.C])

    def with_x(self, x: FloatArray) -> SystemState:
        """Copy with both fields taken from a stacked vector."""
        n_u = self.U.size
        return self.model_copy(update={"U": x[:n_u].copy(), "C": x[n_u:].copy()})

    def with_dirichlet(self, dofmap: DofMap) -> SystemState:
        """Copy with the constrained dofs set to their prescribed values."""
        x = self.x
        x[dofmap.constrained_dofs] = dofmap.constrained_values
        return self.with_x(x)


class StrainSplit(BaseModel):
    """Tensile and compressive parts of a 2x2 strain."""

    eps_plus: FloatArray
    eps_minus: FloatArray
    tr_plus: float
    tr_minus: float
    eigenvalues: FloatArray
    eigenvectors: FloatArray  # columns

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)


class EnergyBreakdown(NamedTuple):
    """Energy contributions in kN mm."""

    elastic: float
    fracture: float
    penalty: float
    total: float


class SplitResponse(NamedTuple):
    """Batched split energies and stresses in Voigt notation."""

    psi_plus: FloatArray
    psi_minus: FloatArray
    sigma_plus: FloatArray
    sigma_minus: FloatArray


class _SplitBasis(NamedTuple):
    values: FloatArray
    p1: FloatArray
    p2: FloatArray
    m: FloatArray
    trace: FloatArray


def _eigen(tensors: FloatArray) -> tuple[FloatArray, FloatArray]:
    """Ascending eigenpairs with the first nonzero vector component positive."""
    values, vectors = np.linalg.eigh(tensors)
    first, second = vectors[..., 0, :], vectors[..., 1, :]
    lead = np.where(np.abs(first) > 1e-14, first, second)
    vectors = vectors * np.where(lead < 0.0, -1.0, 1.0)[..., None, :]
    return values, vectors


def _voigt_to_tensor(e: FloatArray) -> FloatArray:
    tensor = np.empty(e.shape[:-1] + (2, 2))
    tensor[..., 0, 0] = e[..., 0]
    tensor[..., 1, 1] = e[..., 1]
    tensor[..., 0, 1] = tensor[..., 1, 0] = 0.5 * e[..., 2]
    return tensor


def _split_basis(e: FloatArray) -> _SplitBasis:
    """Eigenvalues and Voigt forms of n1 n1, n2 n2 and n1 n2 + n2 n1."""
    values, vectors = _eigen(_voigt_to_tensor(e))
    n1, n2 = vectors[..., :, 0], vectors[..., :, 1]
    p1 = np.stack([n1[..., 0] ** 2, n1[..., 1] ** 2, n1[..., 0] * n1[..., 1]], -1)
    p2 = np.stack([n2[..., 0] ** 2, n2[..., 1] ** 2, n2[..., 0] * n2[..., 1]], -1)
    m = np.stack(
        [
            2.0 * n1[..., 0] * n2[..., 0],
            2.0 * n1[..., 1] * n2[..., 1],
            n1[..., 0] * n2[..., 1] + n1[..., 1] * n2[..., 0],
        ],
        -1,
    )
    return _SplitBasis(values, p1, p2, m, e[..., 0] + e[..., 1])


def _outer(a: FloatArray, b: FloatArray) -> FloatArray:
    return a[..., :, None] * b[..., None, :]


def _compressive_step(x: FloatArray) -> FloatArray:
    return 1.0 - heaviside_plus(x)


def split_response(e: FloatArray, lmbda: float, mu: float) -> SplitResponse:
    """Evaluate split energy densities and stresses for Voigt strains.

    Parameters
    ----------
    e
        Strains ``[e_xx, e_yy, 2 e_xy]`` of shape (..., 3).
    lmbda, mu
        Lame constants.

    Returns
    -------
    SplitResponse
        Energy densities and stresses ``[s_xx, s_yy, s_xy]``.
    """
    basis = _split_basis(e)
    parts = []
    for ramp in (ramp_plus, ramp_minus):
        tr_part = ramp(basis.trace)
        eig_part = ramp(basis.values)
        psi = 0.5 * lmbda * tr_part**2 + mu * np.sum(eig_part**2, axis=-1)
        sigma = lmbda * tr_part[..., None] * VOIGT_IDENTITY + 2.0 * mu * (
            eig_part[..., 0, None] * basis.p1 + eig_part[..., 1, None] * basis.p2
        )
        parts.append((psi, sigma))
    (psi_plus, sigma_plus), (psi_minus, sigma_minus) = parts
    return SplitResponse(psi_plus, psi_minus, sigma_plus, sigma_minus)


def split_tangents(
    e: FloatArray, lmbda: float, mu: float
) -> tuple[FloatArray, FloatArray]:
    """Derivatives of the Voigt stresses of ``split_response`` with respect to e.

    The tangent of ``eps+`` is ``sum H(e_i) P_i x P_i`` plus the rotation of the
    eigenbasis, ``(<e_2> - <e_1>) / (e_2 - e_1) * M x M / 2``; the quotient is
    replaced by ``H`` of the mean eigenvalue when the gap is below
    ``DEGENERATE_GAP``. Zero eigenvalues and a zero trace count as compressive,
    so the two tangents always add up to the linear elastic one.

    Returns
    -------
    tuple[FloatArray, FloatArray]
        Tangents of the tensile and compressive stresses, shape (..., 3, 3).
    """
    basis = _split_basis(e)
    gap = basis.values[..., 1] - basis.values[..., 0]
    distinct = gap > DEGENERATE_GAP
    mean = 0.5 * (basis.values[..., 0] + basis.values[..., 1])
    tangents = []
    for ramp, step in ((ramp_plus, heaviside_plus), (ramp_minus, _compressive_step)):
        eig_part = ramp(basis.values)
        steps = step(basis.values)
        quotient = np.divide(
            eig_part[..., 1] - eig_part[..., 0],
            gap,
            out=np.zeros_like(gap),
            where=distinct,
        )
        rotation = np.where(distinct, quotient, step(mean))
        volumetric = step(basis.trace)[..., None, None] * _outer(
            VOIGT_IDENTITY, VOIGT_IDENTITY
        )
        deviatoric = (
            steps[..., 0, None, None] * _outer(basis.p1, basis.p1)
            + steps[..., 1, None, None] * _outer(basis.p2, basis.p2)
            + 0.5 * rotation[..., None, None] * _outer(basis.m, basis.m)
        )
        tangents.append(lmbda * volumetric + 2.0 * mu * deviatoric)
    return tangents[0], tangents[1]


def _tensor_to_voigt(eps: FloatArray) -> FloatArray:
    eps = np.asarray(eps, dtype=np.float64)
    if eps.shape != (2, 2) or not np.allclose(eps, eps.T, rtol=0.0, atol=1e-14):
        raise ValueError("Strain must be a symmetric 2x2 tensor.")
    return np.array([eps[0, 0], eps[1, 1], 2.0 * eps[0, 1]])


def spectral_split(eps: FloatArray) -> StrainSplit:
    """Split a symmetric strain into its tensile and compressive parts."""
    values, vectors = _eigen(_voigt_to_tensor(_tensor_to_voigt(eps)))
    projections = np.einsum("ik,jk->kij", vectors, vectors)
    trace = float(values.sum())
    return StrainSplit(
        eps_plus=np.einsum("k,kij->ij", ramp_plus(values), projections),
        eps_minus=np.einsum("k,kij->ij", ramp_minus(values), projections),
        tr_plus=max(trace, 0.0),
        tr_minus=min(trace, 0.0),
        eigenvalues=values,
        eigenvectors=vectors,
    )


def energy_densities(eps: FloatArray, lmbda: float, mu: float) -> tuple[float, float]:
    """Tensile and compressive strain energy densities in kN/mm^2."""
    response = split_response(_tensor_to_voigt(eps), lmbda, mu)
    return float(response.psi_plus), float(response.psi_minus)


def stresses(
    eps: FloatArray, lmbda: float, mu: float
) -> tuple[FloatArray, FloatArray]:
    """Tensile and compressive Cauchy stresses as 2x2 tensors."""
    response = split_response(_tensor_to_voigt(eps), lmbda, mu)
    plus, minus = response.sigma_plus, response.sigma_minus
    return (
        np.array([[plus[0], plus[2]], [plus[2], plus[1]]]),
        np.array([[minus[0], minus[2]], [minus[2], minus[1]]]),
    )


def at2_profile(x: FloatArray, l_s: float) -> FloatArray:
    """Optimal one dimensional AT-2 crack profile ``exp(-|x| / l_s)``.

    Its regularized fracture energy per unit crack length is exactly ``G_c``
    on an unbounded domain.
    """
    return np.exp(-np.abs(x) / l_s)


class BlockJacobian(BaseModel):
    """The 2x2 block Hessian of the energy with respect to (U, C)."""

    uu: sparse.csr_matrix
    uc: sparse.csr_matrix
    cu: sparse.csr_matrix
    cc: sparse.csr_matrix

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @property
    def n_u(self) -> int:
        """Displacement block size."""
        return int(self.uu.shape[0])

    @property
    def n_c(self) -> int:
        """Phase-field block size."""
        return int(self.cc.shape[0])

    def monolithic(self) -> sparse.csr_matrix:
        """Assembled ``[[J_uu, J_uc], [J_cu, J_cc]]``."""
        matrix = sparse.bmat([[self.uu, self.uc], [self.cu, self.cc]], format="csr")
        matrix.sort_indices()
        return matrix

    def matvec(self, v: FloatArray) -> FloatArray:
        """Blockwise product with a stacked vector."""
        v_u, v_c = v[: self.n_u], v[self.n_u :]
        return np.concatenate(
            [self.uu @ v_u + self.uc @ v_c, self.cu @ v_u + self.cc @ v_c]
        )

    def as_operator(self) -> LinearOperator:
        """Matrix-free view of the monolithic Jacobian."""
        n = self.n_u + self.n_c
        return LinearOperator((n, n), matvec=self.matvec, dtype=np.float64)


class PhaseFieldModel(BaseModel):
    """Energy, residual and Jacobian of the discrete AT-2 problem.

    Every method is a pure function of its arguments, so one instance can
    serve concurrent evaluations.
    """

    mesh: QuadMesh
    dofmap: DofMap
    material: MaterialParams
    geometry: ElementGeometry

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @classmethod
    def from_mesh(
        cls, mesh: QuadMesh, material: MaterialParams, dofmap: DofMap | None = None
    ) -> PhaseFieldModel:
        """Build the model and precompute the element geometry."""
        dofmap = DofMap(n_nodes=mesh.n_nodes) if dofmap is None else dofmap
        if dofmap.n_nodes != mesh.n_nodes:
            raise ValueError("Dof map and mesh disagree on the number of nodes.")
        return cls(
            mesh=mesh,
            dofmap=dofmap,
            material=material,
            geometry=ElementGeometry.from_mesh(mesh),
        )

    def with_dofmap(self, dofmap: DofMap) -> PhaseFieldModel:
        """Same discretization with another constraint list."""
        return self.model_copy(update={"dofmap": dofmap})

    def _fields(
        self, U: FloatArray, C: FloatArray
    ) -> tuple[FloatArray, FloatArray, FloatArray, FloatArray]:
        """Strain operator, strains, phase field and its gradient per point."""
        b = self.geometry.strain_operator()
        local_c = C[self.mesh.elements]
        strains = np.einsum("mqia,ma->mqi", b, U[element_dofs(self.mesh, "u")])
        c = np.einsum("qa,ma->mq", self.geometry.values, local_c)
        grad_c = np.einsum("mqai,ma->mqi", self.geometry.gradients, local_c)
        return b, strains, c, grad_c

    def _history(self, C_prev: FloatArray) -> FloatArray:
        return np.einsum("qa,ma->mq", self.geometry.values, C_prev[self.mesh.elements])

    def energy(self, U: FloatArray, C: FloatArray, C_prev: FloatArray) -> float:
        """Total energy Psi."""
        return self.energy_parts(U, C, C_prev).total

    def energy_parts(
        self, U: FloatArray, C: FloatArray, C_prev: FloatArray
    ) -> EnergyBreakdown:
        """Elastic, fracture and penalty energies and their sum."""
        mat = self.material
        _, strains, c, grad_c = self._fields(U, C)
        split = split_response(strains, mat.lmbda, mat.mu)
        w = self.geometry.weights
        elastic = np.sum(w * ((1.0 - c) ** 2 * split.psi_plus + split.psi_minus))
        fracture = 0.5 * mat.g_c * np.sum(
            w * (c**2 / mat.l_s + mat.l_s * np.sum(grad_c**2, axis=-1))
        )
        healing = ramp_minus(c - self._history(C_prev))
        penalty = 0.5 * mat.gamma * np.sum(w * healing**2)
        return EnergyBreakdown(
            float(elastic),
            float(fracture),
            float(penalty),
            float(elastic + fracture + penalty),
        )

    def total_energy(self, state: SystemState) -> EnergyBreakdown:
        """Energies of a state."""
        return self.energy_parts(state.U, state.C, state.C_prev)

    def internal_force(self, U: FloatArray, C: FloatArray) -> FloatArray:
        """Unconstrained displacement residual F_u."""
        mat = self.material
        b, strains, c, _ = self._fields(U, C)
        split = split_response(strains, mat.lmbda, mat.mu)
        stress = (1.0 - c)[..., None] ** 2 * split.sigma_plus + split.sigma_minus
        local = np.einsum("mq,mqia,mqi->ma", self.geometry.weights, b, stress)
        return assemble_vector(element_dofs(self.mesh, "u"), local, self.dofmap.n_u)

    def residual_u(self, U: FloatArray, C: FloatArray) -> FloatArray:
        """F_u with the rows of constrained displacement dofs zeroed."""
        force = self.internal_force(U, C)
        force[self.dofmap.constrained_mask("u")] = 0.0
        return force

    def residual_c(
        self, U: FloatArray, C: FloatArray, C_prev: FloatArray
    ) -> FloatArray:
        """F_c with the rows of constrained phase-field dofs zeroed."""
        mat = self.material
        _, strains, c, grad_c = self._fields(U, C)
        psi_plus = split_response(strains, mat.lmbda, mat.mu).psi_plus
        source = (
            2.0 * (c - 1.0) * psi_plus
            + mat.g_c / mat.l_s * c
            + mat.gamma * ramp_minus(c - self._history(C_prev))
        )
        w = self.geometry.weights
        local = np.einsum("mq,qa,mq->ma", w, self.geometry.values, source)
        local += mat.g_c * mat.l_s * np.einsum(
            "mq,mqai,mqi->ma", w, self.geometry.gradients, grad_c
        )
        residual = assemble_vector(self.mesh.elements, local, self.dofmap.n_c)
        residual[self.dofmap.constrained_mask("c")] = 0.0
        return residual

    def residual(self, state: SystemState) -> FloatArray:
        """Stacked gradient ``[F_u; F_c]`` with constrained rows zeroed."""
        return np.concatenate(
            [
                self.residual_u(state.U, state.C),
                self.residual_c(state.U, state.C, state.C_prev),
            ]
        )

    def jacobian_uu(
        self, U: FloatArray, C: FloatArray, constrained: bool = True
    ) -> sparse.csr_matrix:
        """Displacement block of the Hessian."""
        mat = self.material
        b, strains, c, _ = self._fields(U, C)
        tangent_plus, tangent_minus = split_tangents(strains, mat.lmbda, mat.mu)
        tangent = (1.0 - c)[..., None, None] ** 2 * tangent_plus + tangent_minus
        local = np.einsum(
            "mq,mqia,mqij,mqjb->mab", self.geometry.weights, b, tangent, b
        )
        dofs = element_dofs(self.mesh, "u")
        matrix = assemble_matrix(dofs, dofs, local, (self.dofmap.n_u,) * 2)
        if constrained:
            matrix = constrain_matrix(matrix, self.dofmap.constrained_mask("u"))
        return matrix

    def jacobian_uc(
        self, U: FloatArray, C: FloatArray, constrained: bool = True
    ) -> sparse.csr_matrix:
        """Coupling block dF_u / dC."""
        mat = self.material
        b, strains, c, _ = self._fields(U, C)
        sigma_plus = split_response(strains, mat.lmbda, mat.mu).sigma_plus
        local = np.einsum(
            "mq,mqia,mqi,mq,qb->mab",
            self.geometry.weights,
            b,
            sigma_plus,
            2.0 * (c - 1.0),
            self.geometry.values,
        )
        matrix = assemble_matrix(
            element_dofs(self.mesh, "u"),
            self.mesh.elements,
            local,
            (self.dofmap.n_u, self.dofmap.n_c),
        )
        if constrained:
            keep_rows = sparse.diags((~self.dofmap.constrained_mask("u")).astype(float))
            keep_cols = sparse.diags((~self.dofmap.constrained_mask("c")).astype(float))
            matrix = sparse.csr_matrix(keep_rows @ matrix @ keep_cols)
            matrix.sort_indices()
        return matrix

    def jacobian_cc(
        self, U: FloatArray, C: FloatArray, C_prev: FloatArray, constrained: bool = True
    ) -> sparse.csr_matrix:
        """Phase-field block of the Hessian, including the active penalty."""
        mat = self.material
        _, strains, c, _ = self._fields(U, C)
        psi_plus = split_response(strains, mat.lmbda, mat.mu).psi_plus
        reaction = (
            2.0 * psi_plus
            + mat.g_c / mat.l_s
            + mat.gamma * heaviside_minus(c - self._history(C_prev))
        )
        w = self.geometry.weights
        n, g = self.geometry.values, self.geometry.gradients
        local = np.einsum("mq,qa,qb->mab", w * reaction, n, n)
        local += mat.g_c * mat.l_s * np.einsum("mq,mqai,mqbi->mab", w, g, g)
        dofs = self.mesh.elements
        matrix = assemble_matrix(dofs, dofs, local, (self.dofmap.n_c,) * 2)
        if constrained:
            matrix = constrain_matrix(matrix, self.dofmap.constrained_mask("c"))
        return matrix

    def jacobian(
        self,
        state: SystemState,
        constrained: bool = True,
        uu: sparse.csr_matrix | None = None,
        cc: sparse.csr_matrix | None = None,
    ) -> BlockJacobian:
        """All four blocks at ``state``.

        Parameters
        ----------
        state
            Linearization point.
        constrained
            Eliminate Dirichlet dofs (unit diagonal, zero rows and columns).
        uu, cc
            Diagonal blocks already assembled at ``state``, reused as given.

        Returns
        -------
        BlockJacobian
            Blocks with ``cu`` the exact transpose of ``uc``.
        """
        uc = self.jacobian_uc(state.U, state.C, constrained)
        return BlockJacobian(
            uu=self.jacobian_uu(state.U, state.C, constrained) if uu is None else uu,
            uc=uc,
            cu=sparse.csr_matrix(uc.T),
            cc=(
                self.jacobian_cc(state.U, state.C, state.C_prev, constrained)
                if cc is None
                else cc
            ),
        )

    def reaction(self, state: SystemState, node_set: str, component: int) -> float:
        """Sum of internal forces on one displacement component of a node set."""
        force = self.internal_force(state.U, state.C)
        nodes = self.mesh.node_sets[node_set]
        return float(force[2 * nodes + component].sum())
