"""Writers for run reports, fields and matrices."""

from __future__ import annotations

import logging
from pathlib import Path

import meshio
import numpy as np
import pandas as pd
from scipy import io as scipy_io
from scipy import sparse

from spinfrac.config import get_settings
from spinfrac.mesh import QuadMesh
from spinfrac.model import SystemState
from spinfrac.schemas import CSV_COLUMNS, RunReport
from spinfrac.utils import FloatArray

logger = logging.getLogger(__name__)


def report_frame(report: RunReport) -> pd.DataFrame:
    """One row per step, columns in CSV order."""
    return pd.DataFrame(
        [record.csv_row() for record in report.records], columns=list(CSV_COLUMNS)
    )


def write_csv(report: RunReport, path: Path | str) -> Path:
    """Write the per-step table of a report.

    Floats are written with enough digits to be read back exactly; an empty
    report gives a header-only file.

    Parameters
    ----------
    report
        Run to write.
    path
        Target file, parent directories are created.

    Returns
    -------
    Path
        The written file.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    report_frame(report).to_csv(
        path, index=False, float_format=get_settings().output.float_format
    )
    logger.info(f"Wrote {len(report.records)} steps to {path}")
    return path


def read_csv(path: Path | str) -> pd.DataFrame:
    """Read a report table back without losing precision."""
    return pd.read_csv(path, float_precision="round_trip")


def _points_3d(coords: FloatArray) -> FloatArray:
    return np.column_stack([coords, np.zeros(coords.shape[0])])


def to_meshio(mesh: QuadMesh, state: SystemState | None = None) -> meshio.Mesh:
    """Convert a mesh, and optionally the fields of a state, to meshio."""
    point_data = {}
    if state is not None:
        if state.C.size != mesh.n_nodes:
            raise ValueError("State and mesh disagree on the number of nodes.")
        point_data = {
            "c": state.C.copy(),
            "u": _points_3d(state.U.reshape(-1, 2)),
        }
    return meshio.Mesh(
        points=_points_3d(mesh.node_coords),
        cells=[("quad", mesh.elements)],
        point_data=point_data,
    )


def write_vtk(state: SystemState | None, mesh: QuadMesh, path: Path | str) -> Path:
    """Write a legacy ASCII VTK file with the point fields ``c`` and ``u``.

    Without a state only the mesh is written.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meshio.write(path, to_meshio(mesh, state), file_format="vtk", binary=False)
    logger.debug(f"Wrote {path}")
    return path


def export_matrix_market(matrix: sparse.spmatrix, path: Path | str) -> Path:
    """Write a sparse matrix in MatrixMarket coordinate format."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    scipy_io.mmwrite(path, sparse.coo_matrix(matrix), precision=17)
    logger.info(f"Wrote {matrix.shape[0]}x{matrix.shape[1]} matrix to {path}")
    return path
