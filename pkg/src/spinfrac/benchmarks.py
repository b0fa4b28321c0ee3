"""The five fracture benchmarks: geometry, supports, loading and material."""

from __future__ import annotations

import logging
import math
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from spinfrac.fem import DofMap
from spinfrac.mesh import (
    QuadMesh,
    RefinementBand,
    build_rect_mesh,
    cut_seam,
    remove_elements,
)
from spinfrac.model import MaterialParams
from spinfrac.utils import BoolArray, FloatArray

logger = logging.getLogger(__name__)

BenchmarkName = Literal[
    "tension", "shear", "three_point_bending", "l_shape", "asym_notched_beam"
]
Point = tuple[float, float]
Box = tuple[float, float, float, float]


class Notch(BaseModel):
    """Axis-aligned crack opened in the mesh."""

    start: Point
    end: Point

    model_config = ConfigDict(frozen=True)


class Hole(BaseModel):
    """Circular hole, approximated by removing the elements it covers."""

    center: Point
    radius: float = Field(gt=0)

    model_config = ConfigDict(frozen=True)


class PointSet(BaseModel):
    """Named node set holding the single node closest to ``point``."""

    name: str
    point: Point

    model_config = ConfigDict(frozen=True)


class BoxSet(BaseModel):
    """Named node set: the nodes of ``source`` lying inside a box."""

    name: str
    source: str
    box: Box

    model_config = ConfigDict(frozen=True)


class DirichletCondition(BaseModel):
    """Displacement component prescribed as ``rate * t`` on a node set."""

    node_set: str
    component: Literal[0, 1]
    rate: float = 0.0

    model_config = ConfigDict(frozen=True)


class LoadPhase(BaseModel):
    """``steps`` pseudo-time increments of size ``dt``."""

    dt: float = Field(gt=0)
    steps: int = Field(ge=0)

    model_config = ConfigDict(frozen=True)


class BenchmarkSpec(BaseModel):
    """Everything needed to set up one benchmark run.

    The crack band is meshed with ``h = l_s / (2 * mesh_scale)``. Away from
    it the spacing grows up to ``width / nx`` (scaled likewise).
    """

    name: BenchmarkName
    width: float = Field(gt=0)
    height: float = Field(gt=0)
    nx: int = Field(ge=1)
    ny: int = Field(ge=1)
    band: Box
    x_breaks: tuple[float, ...] = ()
    y_breaks: tuple[float, ...] = ()
    cutout: Box | None = None
    holes: tuple[Hole, ...] = ()
    notches: tuple[Notch, ...] = ()
    point_sets: tuple[PointSet, ...] = ()
    box_sets: tuple[BoxSet, ...] = ()
    dirichlet: tuple[DirichletCondition, ...]
    phases: tuple[LoadPhase, ...]
    material: MaterialParams
    reaction_set: str
    reaction_component: Literal[0, 1] = 1
    mesh_scale: float = Field(1.0, gt=0)

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def check_band(self) -> BenchmarkSpec:
        """The crack band must be a nonempty box inside the rectangle."""
        x_min, x_max, y_min, y_max = self.band
        if not (0 <= x_min < x_max <= self.width and 0 <= y_min < y_max <= self.height):
            raise ValueError(f"{self.name}: crack band {self.band} is invalid.")
        return self

    @property
    def band_h(self) -> float:
        """Element size inside the crack band."""
        return self.material.l_s / (2.0 * self.mesh_scale)

    @property
    def n_steps(self) -> int:
        """Number of loading steps of the schedule."""
        return sum(phase.steps for phase in self.phases)

    def times(self) -> FloatArray:
        """Pseudo times of the loading steps, ``t_1 < t_2 < ...``."""
        increments = [np.full(phase.steps, phase.dt) for phase in self.phases]
        if not increments:
            return np.zeros(0)
        return np.cumsum(np.concatenate(increments))

    def truncated(self, steps: int) -> BenchmarkSpec:
        """Copy whose schedule stops after ``steps`` steps."""
        if steps < 0:
            raise ValueError("Number of steps must be nonnegative.")
        phases = []
        remaining = steps
        for phase in self.phases:
            taken = min(phase.steps, remaining)
            if taken:
                phases.append(phase.model_copy(update={"steps": taken}))
            remaining -= taken
        return self.model_copy(update={"phases": tuple(phases)})

    def with_length_scale(self, l_s: float) -> BenchmarkSpec:
        """Copy with another length scale; band spacing and penalty follow."""
        return self.model_copy(
            update={"material": self.material.with_length_scale(l_s)}
        )

    def with_mesh_scale(self, mesh_scale: float) -> BenchmarkSpec:
        """Copy refined (``> 1``) or coarsened (``< 1``) by ``mesh_scale``."""
        if mesh_scale <= 0:
            raise ValueError("Mesh scale must be positive.")
        return self.model_copy(update={"mesh_scale": mesh_scale})

    def build_mesh(self) -> QuadMesh:
        """Mesh the domain and tag its supports and loaded nodes.

        Raises
        ------
        ValueError
            If a notch, support or load point is not on a grid line.
        """
        x_min, x_max, y_min, y_max = self.band
        band = RefinementBand(
            x_min=x_min, x_max=x_max, y_min=y_min, y_max=y_max, h=self.band_h
        )
        ends = [p for notch in self.notches for p in (notch.start, notch.end)]
        breaks_x = {*self.x_breaks, *(p[0] for p in ends)}
        breaks_y = {*self.y_breaks, *(p[1] for p in ends)}
        mesh = build_rect_mesh(
            self.width,
            self.height,
            max(1, math.ceil(self.nx * self.mesh_scale)),
            max(1, math.ceil(self.ny * self.mesh_scale)),
            band,
            x_breaks=sorted(breaks_x),
            y_breaks=sorted(breaks_y),
        )
        if self.cutout is not None:
            cx0, cx1, cy0, cy1 = self.cutout

            def in_cutout(centroids: FloatArray) -> BoolArray:
                x, y = centroids[:, 0], centroids[:, 1]
                return (x > cx0) & (x < cx1) & (y > cy0) & (y < cy1)

            mesh = remove_elements(mesh, in_cutout, name="cutout")
        for hole in self.holes:
            center = np.asarray(hole.center)
            radius = hole.radius

            def in_hole(centroids: FloatArray) -> BoolArray:
                return np.linalg.norm(centroids - center, axis=1) < radius

            mesh = remove_elements(mesh, in_hole, name="hole")
        for notch in self.notches:
            mesh = cut_seam(mesh, notch.start, notch.end, name="notch")
        for selection in self.box_sets:
            b0, b1, b2, b3 = selection.box
            nodes = mesh.node_sets[selection.source]
            xy = mesh.node_coords[nodes]
            inside = (xy[:, 0] >= b0) & (xy[:, 0] <= b1)
            inside &= (xy[:, 1] >= b2) & (xy[:, 1] <= b3)
            mesh = mesh.with_node_set(selection.name, nodes[inside])
        for point_set in self.point_sets:
            mesh = mesh.with_node_set(point_set.name, [mesh.find_node(point_set.point)])
        logger.info(
            f"{self.name}: {mesh.n_elements} elements, {mesh.n_nodes} nodes, "
            f"{3 * mesh.n_nodes} dofs, band h = {self.band_h:.3g} mm"
        )
        return mesh

    def constraints(self, dofmap: DofMap, mesh: QuadMesh, t: float) -> DofMap:
        """Dof map carrying the displacement constraints at time ``t``.

        A dof named by several conditions takes the value of the last one.
        """
        dofs, values = [], []
        for condition in self.dirichlet:
            nodes = mesh.node_sets[condition.node_set]
            dofs.append(dofmap.u_dof(nodes, condition.component))
            values.append(np.full(nodes.size, condition.rate * t))
        if not dofs:
            return dofmap.with_constraints([], [])
        all_dofs = np.concatenate(dofs)[::-1]
        all_values = np.concatenate(values)[::-1]
        unique, first = np.unique(all_dofs, return_index=True)
        return dofmap.with_constraints(unique, all_values[first])


def _fixed(node_set: str) -> tuple[DirichletCondition, DirichletCondition]:
    return (
        DirichletCondition(node_set=node_set, component=0),
        DirichletCondition(node_set=node_set, component=1),
    )


def tension() -> BenchmarkSpec:
    """Single edge notched plate pulled apart at its top edge."""
    return BenchmarkSpec(
        name="tension",
        width=1.0,
        height=1.0,
        nx=20,
        ny=20,
        band=(0.5, 1.0, 0.49, 0.51),
        notches=(Notch(start=(0.0, 0.5), end=(0.5, 0.5)),),
        dirichlet=(
            *_fixed("bottom"),
            DirichletCondition(node_set="top", component=0),
            DirichletCondition(node_set="top", component=1, rate=1.0),
        ),
        phases=(LoadPhase(dt=5e-5, steps=140),),
        material=MaterialParams(lmbda=121.15, mu=80.77, g_c=2.7e-3, l_s=0.003),
        reaction_set="top",
        reaction_component=1,
    )


def shear() -> BenchmarkSpec:
    """Single edge notched plate sheared along its top edge."""
    return BenchmarkSpec(
        name="shear",
        width=1.0,
        height=1.0,
        nx=20,
        ny=20,
        band=(0.5, 0.95, 0.25, 0.5),
        notches=(Notch(start=(0.0, 0.5), end=(0.5, 0.5)),),
        dirichlet=(
            *_fixed("bottom"),
            DirichletCondition(node_set="left", component=1),
            DirichletCondition(node_set="right", component=1),
            DirichletCondition(node_set="top", component=1),
            DirichletCondition(node_set="top", component=0, rate=1.0),
        ),
        phases=(LoadPhase(dt=1e-3, steps=8), LoadPhase(dt=7.5e-5, steps=160)),
        material=MaterialParams(lmbda=121.15, mu=80.77, g_c=2.7e-3, l_s=0.006),
        reaction_set="top",
        reaction_component=0,
    )


def three_point_bending() -> BenchmarkSpec:
    """Notched beam on two supports loaded at mid-span."""
    return BenchmarkSpec(
        name="three_point_bending",
        width=8.0,
        height=2.0,
        nx=20,
        ny=5,
        band=(3.96, 4.04, 0.0, 2.0),
        x_breaks=(4.0,),
        notches=(Notch(start=(4.0, 0.0), end=(4.0, 0.4)),),
        point_sets=(
            PointSet(name="pin", point=(0.0, 0.0)),
            PointSet(name="roller", point=(8.0, 0.0)),
            PointSet(name="load", point=(4.0, 2.0)),
        ),
        dirichlet=(
            *_fixed("pin"),
            DirichletCondition(node_set="roller", component=1),
            DirichletCondition(node_set="load", component=1, rate=-1.0),
        ),
        phases=(LoadPhase(dt=1e-3, steps=80),),
        material=MaterialParams(lmbda=12.0, mu=8.0, g_c=5.4e-4, l_s=0.01),
        reaction_set="load",
    )


def l_shape() -> BenchmarkSpec:
    """L-shaped panel: the crack nucleates at the reentrant corner."""
    return BenchmarkSpec(
        name="l_shape",
        width=500.0,
        height=500.0,
        nx=20,
        ny=20,
        band=(40.0, 255.0, 200.0, 255.0),
        x_breaks=(250.0, 470.0),
        y_breaks=(250.0,),
        cutout=(250.0, 500.0, 250.0, 500.0),
        box_sets=(BoxSet(name="support", source="bottom", box=(0, 250, 0, 0)),),
        point_sets=(PointSet(name="load", point=(470.0, 250.0)),),
        dirichlet=(
            *_fixed("support"),
            DirichletCondition(node_set="load", component=1, rate=1.0),
        ),
        phases=(LoadPhase(dt=1e-2, steps=20), LoadPhase(dt=1e-3, steps=600)),
        material=MaterialParams(lmbda=6.16, mu=10.95, g_c=8.9e-5, l_s=2.0),
        reaction_set="load",
    )


def asym_notched_beam() -> BenchmarkSpec:
    """Beam with an off-center notch and three holes, pinned at two points."""
    return BenchmarkSpec(
        name="asym_notched_beam",
        width=20.0,
        height=8.0,
        nx=20,
        ny=8,
        band=(3.5, 6.2, 0.8, 7.1),
        x_breaks=(1.0, 6.0, 10.0, 19.0),
        y_breaks=(1.0,),
        holes=tuple(
            Hole(center=(4.0, y), radius=0.25) for y in (2.75, 4.75, 6.75)
        ),
        notches=(Notch(start=(6.0, 0.0), end=(6.0, 1.0)),),
        point_sets=(
            PointSet(name="pin", point=(1.0, 0.0)),
            PointSet(name="roller", point=(19.0, 0.0)),
            PointSet(name="load", point=(10.0, 8.0)),
        ),
        dirichlet=(
            *_fixed("pin"),
            DirichletCondition(node_set="roller", component=1),
            DirichletCondition(node_set="load", component=1, rate=-1.0),
        ),
        phases=(LoadPhase(dt=1e-3, steps=160), LoadPhase(dt=1e-4, steps=400)),
        material=MaterialParams(lmbda=12.0, mu=8.0, g_c=1e-3, l_s=0.06),
        reaction_set="load",
    )


BENCHMARKS = {
    "tension": tension,
    "shear": shear,
    "three_point_bending": three_point_bending,
    "l_shape": l_shape,
    "asym_notched_beam": asym_notched_beam,
}


def benchmark_specs() -> tuple[BenchmarkSpec, ...]:
    """Return the five benchmarks at their default resolution."""
    return tuple(factory() for factory in BENCHMARKS.values())


def get_benchmark(name: str, mesh_scale: float = 1.0) -> BenchmarkSpec:
    """Look a benchmark up by name.

    Raises
    ------
    ValueError
        If ``name`` is not one of the five benchmarks.
    """
    try:
        factory = BENCHMARKS[name]
    except KeyError:
        raise ValueError(
            f"Unknown benchmark {name!r}, choose one of {sorted(BENCHMARKS)}."
        ) from None
    spec = factory()
    return spec if mesh_scale == 1.0 else spec.with_mesh_scale(mesh_scale)
