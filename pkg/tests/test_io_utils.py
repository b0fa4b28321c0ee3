import meshio
import numpy as np
import pytest
from scipy import io as scipy_io
from scipy import sparse
from spinfrac.fem import DofMap
from spinfrac.io_utils import (
    export_matrix_market,
    read_csv,
    to_meshio,
    write_csv,
    write_vtk,
)
from spinfrac.mesh import build_rect_mesh
from spinfrac.model import SystemState
from spinfrac.schemas import CSV_COLUMNS, RunReport, StepRecord


@pytest.fixture()
def small_mesh():
    return build_rect_mesh(1.0, 1.0, 2, 2)


@pytest.fixture()
def small_state(small_mesh):
    state = SystemState.zeros(DofMap(n_nodes=small_mesh.n_nodes), t=0.5)
    rng = np.random.default_rng(3)
    return state.model_copy(
        update={
            "U": rng.normal(size=2 * small_mesh.n_nodes),
            "C": rng.uniform(size=small_mesh.n_nodes),
        }
    )


def test_write_csv_header_only(tmp_path):
    path = write_csv(RunReport(benchmark="shear", solver="AM-ND"), tmp_path / "a.csv")

    assert path.read_text().strip() == ",".join(CSV_COLUMNS)


def test_write_csv_keeps_floats(tmp_path):
    energy = 1.0 / 3.0 + 1e-13
    record = StepRecord(
        step=1,
        time=0.1,
        E_elastic=energy,
        E_fracture=2.0e-7 / 7.0,
        E_penalty=0.0,
        Psi=energy + 2.0e-7 / 7.0,
        nl_global=4,
        reaction=-1.2345678901234567,
    )
    report = RunReport(benchmark="shear", solver="MSPIN", records=[record])
    path = write_csv(report, tmp_path / "nested" / "run.csv")
    frame = read_csv(path)

    assert list(frame.columns) == list(CSV_COLUMNS)
    assert frame["E_elastic"].iloc[0] == energy
    assert frame["E_fracture"].iloc[0] == 2.0e-7 / 7.0
    assert frame["reaction"].iloc[0] == -1.2345678901234567
    assert frame["nl_global"].iloc[0] == 4


def test_to_meshio(small_mesh, small_state):
    converted = to_meshio(small_mesh, small_state)

    assert converted.points.shape == (9, 3)
    assert np.all(converted.points[:, 2] == 0.0)
    assert converted.cells[0].type == "quad"
    assert np.array_equal(converted.point_data["c"], small_state.C)
    assert converted.point_data["u"].shape == (9, 3)
    assert np.array_equal(
        converted.point_data["u"][:, :2], small_state.U.reshape(-1, 2)
    )


def test_to_meshio_size_mismatch(small_mesh):
    state = SystemState.zeros(DofMap(n_nodes=4))
    with pytest.raises(ValueError, match="number of nodes"):
        to_meshio(small_mesh, state)


def test_write_vtk(tmp_path, small_mesh, small_state):
    path = write_vtk(small_state, small_mesh, tmp_path / "out" / "state.vtk")
    read_back = meshio.read(path)

    assert np.allclose(read_back.points[:, :2], small_mesh.node_coords)
    assert np.allclose(read_back.point_data["c"], small_state.C)
    assert np.allclose(
        read_back.point_data["u"][:, :2], small_state.U.reshape(-1, 2)
    )


def test_write_vtk_mesh_only(tmp_path, small_mesh):
    read_back = meshio.read(write_vtk(None, small_mesh, tmp_path / "mesh.vtk"))

    assert read_back.points.shape[0] == small_mesh.n_nodes
    assert "c" not in read_back.point_data


def test_export_matrix_market(tmp_path):
    matrix = sparse.csr_matrix(
        np.array([[4.0, -1.0, 0.0], [-1.0, 4.0, 1.0 / 3.0], [0.0, 2.0, 5.0]])
    )
    path = export_matrix_market(matrix, tmp_path / "jacobian.mtx")
    read_back = sparse.csr_matrix(scipy_io.mmread(path))

    assert read_back.shape == (3, 3)
    assert np.allclose(read_back.toarray(), matrix.toarray(), rtol=1e-15)
