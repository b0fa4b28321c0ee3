"""Pytest configuration file."""

import numpy as np
import pytest
from spinfrac.benchmarks import tension
from spinfrac.config import get_settings
from spinfrac.fem import DofMap
from spinfrac.mesh import build_rect_mesh
from spinfrac.model import MaterialParams, PhaseFieldModel, SystemState
from spinfrac.solvers import NewtonConfig


@pytest.fixture(autouse=True)
def isolated_settings(monkeypatch, tmp_path):
    """Keep a local .env file and previous settings out of the tests."""
    monkeypatch.chdir(tmp_path)
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture()
def material():
    """Soft material with a length scale comparable to a 4x4 patch."""
    return MaterialParams(lmbda=12.0, mu=8.0, g_c=5.4e-4, l_s=0.3)


@pytest.fixture()
def patch_mesh():
    return build_rect_mesh(1.0, 1.0, 4, 4)


def clamp_and_pull(mesh, displacement):
    """Dof map fixing the bottom edge and pulling the top edge upwards."""
    dofmap = DofMap(n_nodes=mesh.n_nodes)
    bottom, top = mesh.node_sets["bottom"], mesh.node_sets["top"]
    dofs = np.concatenate(
        [
            dofmap.u_dof(bottom, 0),
            dofmap.u_dof(bottom, 1),
            dofmap.u_dof(top, 0),
            dofmap.u_dof(top, 1),
        ]
    )
    values = np.concatenate(
        [np.zeros(3 * bottom.size), np.full(top.size, displacement)]
    )
    return dofmap.with_constraints(dofs, values)


@pytest.fixture()
def patch_model(patch_mesh, material):
    """4x4 patch clamped at the bottom with its top pulled up by 0.01 mm."""
    dofmap = clamp_and_pull(patch_mesh, 0.01)
    return PhaseFieldModel.from_mesh(patch_mesh, material, dofmap)


@pytest.fixture()
def random_state(patch_model):
    """Admissible state with tension everywhere and some healing."""
    rng = np.random.default_rng(42)
    n = patch_model.mesh.n_nodes
    coords = patch_model.mesh.node_coords
    U = np.zeros(2 * n)
    U[0::2] = 0.004 * coords[:, 0] + 1e-3 * rng.standard_normal(n)
    U[1::2] = 0.01 * coords[:, 1] + 1e-3 * rng.standard_normal(n)
    C = rng.uniform(0.1, 0.6, n)
    C_prev = C + rng.uniform(-0.2, 0.2, n)
    state = SystemState(U=U, C=C, C_prev=C_prev)
    return state.with_dirichlet(patch_model.dofmap)


@pytest.fixture()
def pulled_model(patch_mesh, material):
    """4x4 patch pulled by 0.004 mm, enough to damage it without localizing."""
    dofmap = clamp_and_pull(patch_mesh, 0.004)
    return PhaseFieldModel.from_mesh(patch_mesh, material, dofmap)


@pytest.fixture()
def initial_state(pulled_model):
    """Undamaged state carrying the prescribed displacements."""
    return SystemState.zeros(pulled_model.dofmap).with_dirichlet(pulled_model.dofmap)


@pytest.fixture()
def tight_newton():
    """Subproblem settings whose absolute floor sits below the global tolerance."""
    return NewtonConfig(eps_abs_sub_nonl=1e-13)


@pytest.fixture()
def small_tension():
    """Tension benchmark with a length scale that allows a mesh of a few hundred
    nodes."""
    return tension().with_length_scale(0.05).with_mesh_scale(0.5)
