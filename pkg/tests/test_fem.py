import numpy as np
import pytest
from pydantic import ValidationError
from spinfrac.fem import (
    DofMap,
    ElementGeometry,
    Quadrature,
    apply_dirichlet,
    assemble,
    assemble_matrix,
    assemble_vector,
    element_dofs,
    elasticity_kernel,
    gauss_2x2,
    laplace_kernel,
    mass_kernel,
    shape_eval,
)
from spinfrac.mesh import build_rect_mesh


def test_gauss_rule():
    rule = gauss_2x2()
    assert rule.weights.sum() == pytest.approx(4.0)
    # Exact for x^2 y^2 on the reference square: 4/9.
    x, y = rule.points[:, 0], rule.points[:, 1]
    assert np.sum(rule.weights * x**2 * y**2) == pytest.approx(4.0 / 9.0)
    with pytest.raises(ValidationError):
        Quadrature(points=np.zeros((1, 2)), weights=np.ones(1))


@pytest.mark.parametrize("xi,eta", [(-1.0, -1.0), (0.3, -0.7), (0.0, 0.0)])
def test_shape_functions(xi, eta):
    values, gradients = shape_eval(xi, eta)
    assert values.sum() == pytest.approx(1.0)
    assert np.allclose(gradients.sum(axis=0), 0.0)
    corners = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])
    assert np.allclose(values @ corners, [xi, eta])


def test_shape_functions_interpolate_corners():
    values, _ = shape_eval(1.0, 1.0)
    assert np.allclose(values, [0.0, 0.0, 1.0, 0.0])


def test_element_geometry():
    mesh = build_rect_mesh(2.0, 1.0, 4, 3)
    geometry = ElementGeometry.from_mesh(mesh)
    assert geometry.n_elements == 12
    assert geometry.weights.sum() == pytest.approx(2.0)
    # Gradients reproduce the gradient of x.
    x = mesh.node_coords[mesh.elements, 0]
    grad_x = np.einsum("mqai,ma->mqi", geometry.gradients, x)
    assert np.allclose(grad_x, [1.0, 0.0])
    assert geometry.strain_operator().shape == (12, 4, 3, 8)


def test_element_dofs():
    mesh = build_rect_mesh(1.0, 1.0, 1, 1)
    assert element_dofs(mesh, "c").tolist() == [[0, 1, 3, 2]]
    assert element_dofs(mesh, "u").tolist() == [[0, 1, 2, 3, 6, 7, 4, 5]]


def test_assembled_operators():
    mesh = build_rect_mesh(2.0, 1.0, 4, 2)
    dofmap = DofMap(n_nodes=mesh.n_nodes)
    mass = assemble(mesh, dofmap, mass_kernel)
    stiffness = assemble(mesh, dofmap, laplace_kernel)
    ones = np.ones(mesh.n_nodes)
    assert ones @ mass @ ones == pytest.approx(2.0)
    assert np.allclose(stiffness @ ones, 0.0)
    assert abs(stiffness - stiffness.T).max() < 1e-14

    elastic = assemble(mesh, dofmap, elasticity_kernel(12.0, 8.0), field="u")
    assert elastic.shape == (dofmap.n_u, dofmap.n_u)
    coords = mesh.node_coords
    translation = np.tile([1.0, 0.0], mesh.n_nodes)
    rotation = np.column_stack([-coords[:, 1], coords[:, 0]]).ravel()
    assert np.allclose(elastic @ translation, 0.0)
    assert np.allclose(elastic @ rotation, 0.0, atol=1e-12)

    load = assemble(mesh, dofmap, lambda g: np.einsum("mq,qa->ma", g.weights, g.values))
    assert load.sum() == pytest.approx(2.0)


def test_assembly_shape_errors():
    with pytest.raises(ValueError):
        dofs = np.zeros((2, 4), dtype=int)
        assemble_matrix(dofs, dofs, np.zeros((2, 3, 3)), (4, 4))
    with pytest.raises(ValueError):
        assemble_vector(np.zeros((2, 4), int), np.zeros((2, 3)), 4)
    mesh = build_rect_mesh(1.0, 1.0, 1, 1)
    with pytest.raises(ValueError):
        assemble(mesh, DofMap(n_nodes=4), lambda g: np.zeros(3))


def test_dofmap():
    dofmap = DofMap(n_nodes=4)
    assert (dofmap.n_u, dofmap.n_c, dofmap.size) == (8, 4, 12)
    assert dofmap.index_c.tolist() == [8, 9, 10, 11]
    assert dofmap.u_dof(np.array([1, 2]), 1).tolist() == [3, 5]
    assert int(dofmap.c_dof(3)) == 11

    constrained = dofmap.with_constraints([0, 9], [0.5, 1.0])
    dofs, values = constrained.field_constraints("c")
    assert dofs.tolist() == [1] and values.tolist() == [1.0]
    dofs, _ = constrained.field_constraints("u")
    assert dofs.tolist() == [0]
    assert constrained.constrained_mask("c").tolist() == [False, True, False, False]
    assert constrained.constrained_mask().sum() == 2


@pytest.mark.parametrize(
    "dofs,values", [([0, 0], [1.0, 2.0]), ([12], [0.0]), ([0, 1], [1.0])]
)
def test_dofmap_errors(dofs, values):
    with pytest.raises(ValidationError):
        DofMap(n_nodes=4).with_constraints(dofs, values)


def test_apply_dirichlet():
    mesh = build_rect_mesh(1.0, 1.0, 4, 4)
    dofmap = DofMap(n_nodes=mesh.n_nodes)
    stiffness = assemble(mesh, dofmap, laplace_kernel)
    left, right = mesh.node_sets["left"], mesh.node_sets["right"]
    dofmap = dofmap.with_constraints(
        dofmap.c_dof(np.concatenate([left, right])),
        np.concatenate([np.zeros(left.size), np.ones(right.size)]),
    )
    matrix, rhs = apply_dirichlet(stiffness, np.zeros(mesh.n_nodes), dofmap, "c")
    assert abs(matrix - matrix.T).max() < 1e-14
    solution = np.linalg.solve(matrix.toarray(), rhs)
    # The linear ramp in x is reproduced exactly.
    assert np.allclose(solution, mesh.node_coords[:, 0])

    with pytest.raises(ValueError):
        apply_dirichlet(stiffness, np.zeros(3), dofmap, "c")
