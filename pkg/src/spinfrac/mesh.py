"""Structured quadrilateral meshes with notches, holes and tagged boundaries."""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from spinfrac.utils import BoolArray, FloatArray, IntArray

logger = logging.getLogger(__name__)

# Local edge k of an element joins local nodes k and (k + 1) % 4.
LOCAL_EDGES = np.array([[0, 1], [1, 2], [2, 3], [3, 0]], dtype=np.int64)


class RefinementBand(BaseModel):
    """Axis-aligned box meshed at spacing ``h``."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    h: float = Field(gt=0)

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def check_box(self) -> RefinementBand:
        """Reject empty boxes."""
        if self.x_max <= self.x_min or self.y_max <= self.y_min:
            raise ValueError("Refinement band must have positive width and height.")
        return self


class QuadMesh(BaseModel):
    """Conforming mesh of bilinear quadrilaterals.

    Elements list their four nodes counter-clockwise. Side sets store
    ``(element, local_edge)`` pairs so that they stay valid when nodes are
    duplicated along a seam.
    """

    node_coords: FloatArray
    elements: IntArray
    node_sets: dict[str, IntArray] = {}
    side_sets: dict[str, IntArray] = {}

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @model_validator(mode="after")
    def check_topology(self) -> QuadMesh:
        """Check index ranges and element orientation."""
        coords, elements = self.node_coords, self.elements
        if coords.ndim != 2 or coords.shape[1] != 2:
            raise ValueError("node_coords must have shape (n_nodes, 2).")
        if elements.ndim != 2 or elements.shape[1] != 4:
            raise ValueError("elements must have shape (n_elements, 4).")
        if elements.shape[0] == 0:
            raise ValueError("A mesh needs at least one element.")
        n_nodes = coords.shape[0]
        if elements.min() < 0 or elements.max() >= n_nodes:
            raise ValueError("Element connectivity references a nonexistent node.")
        for name, nodes in self.node_sets.items():
            if nodes.size and (nodes.min() < 0 or nodes.max() >= n_nodes):
                raise ValueError(f"Node set '{name}' references a nonexistent node.")
        for name, sides in self.side_sets.items():
            if sides.size and (
                sides[:, 0].min() < 0
                or sides[:, 0].max() >= elements.shape[0]
                or sides[:, 1].min() < 0
                or sides[:, 1].max() > 3
            ):
                raise ValueError(f"Side set '{name}' references a nonexistent side.")
        # det J of a bilinear map is affine in each reference coordinate, so
        # positivity at the corners implies positivity everywhere.
        corners = coords[elements]
        nxt = np.roll(corners, -1, axis=1) - corners
        prv = np.roll(corners, 1, axis=1) - corners
        cross = nxt[..., 0] * prv[..., 1] - nxt[..., 1] * prv[..., 0]
        if np.any(cross <= 0.0):
            bad = int(np.argwhere(cross <= 0.0)[0, 0])
            raise ValueError(f"Element {bad} is degenerate or not counter-clockwise.")
        return self

    @property
    def n_nodes(self) -> int:
        """Number of nodes."""
        return int(self.node_coords.shape[0])

    @property
    def n_elements(self) -> int:
        """Number of elements."""
        return int(self.elements.shape[0])

    @property
    def h_min(self) -> float:
        """Shortest element edge."""
        return float(self.edge_lengths().min())

    @property
    def h_max(self) -> float:
        """Longest element edge."""
        return float(self.edge_lengths().max())

    def edge_lengths(self) -> FloatArray:
        """Lengths of all element edges, shape (n_elements, 4)."""
        corners = self.node_coords[self.elements]
        return np.linalg.norm(np.roll(corners, -1, axis=1) - corners, axis=2)

    def centroids(self) -> FloatArray:
        """Vertex averages of the elements."""
        return self.node_coords[self.elements].mean(axis=1)

    def areas(self) -> FloatArray:
        """Exact element areas (shoelace formula, edges are straight)."""
        corners = self.node_coords[self.elements]
        x, y = corners[..., 0], corners[..., 1]
        return 0.5 * np.sum(x * np.roll(y, -1, axis=1) - np.roll(x, -1, axis=1) * y, 1)

    def side_nodes(self, name: str) -> IntArray:
        """Node pairs of the edges in side set ``name``, shape (k, 2)."""
        sides = self.side_sets[name]
        return self.elements[sides[:, 0, None], LOCAL_EDGES[sides[:, 1]]]

    def find_node(self, point: Sequence[float], tol: float | None = None) -> int:
        """Return the index of the node at ``point``.

        Parameters
        ----------
        point
            (x, y) coordinates in mm.
        tol
            Accepted distance. Defaults to a tenth of the shortest edge.

        Returns
        -------
        int
            Lowest node index within ``tol`` of ``point``.

        Raises
        ------
        ValueError
            If no node is close enough.
        """
        tol = 0.1 * self.h_min if tol is None else tol
        distance = np.linalg.norm(self.node_coords - np.asarray(point), axis=1)
        candidates = np.flatnonzero(distance <= tol)
        if candidates.size == 0:
            raise ValueError(f"No mesh node at {tuple(point)}.")
        return int(candidates[0])

    def with_node_set(self, name: str, nodes: Sequence[int] | IntArray) -> QuadMesh:
        """Return a copy with an extra (or replaced) node set."""
        node_sets = dict(self.node_sets)
        node_sets[name] = np.unique(np.asarray(nodes, dtype=np.int64))
        return QuadMesh(
            node_coords=self.node_coords,
            elements=self.elements,
            node_sets=node_sets,
            side_sets=self.side_sets,
        )


def _unique_edges(elements: IntArray) -> tuple[IntArray, IntArray, IntArray]:
    """Deduplicate element edges.

    Returns the sorted unique node pairs, for every (element, local edge) the
    index of its unique edge, and how many elements share each unique edge.
    """
    pairs = elements[:, LOCAL_EDGES].reshape(-1, 2)
    pairs = np.sort(pairs, axis=1)
    unique, inverse, counts = np.unique(
        pairs, axis=0, return_inverse=True, return_counts=True
    )
    return unique, inverse.reshape(-1), counts


def _graded_axis(
    length: float,
    coarse: float,
    fine: float | None,
    span: tuple[float, float] | None,
    breaks: Sequence[float],
    growth: float,
) -> FloatArray:
    """Return increasing grid coordinates on [0, length].

    The target spacing is ``fine`` inside ``span`` and grows linearly with the
    distance to it, capped at ``coarse``. Every coordinate of ``breaks`` is a
    grid line.
    """
    stops = {0.0, length, *[b for b in breaks if 0.0 < b < length]}
    if span is not None:
        stops.update(s for s in span if 0.0 < s < length)
    points = sorted(stops)
    coords = [np.array([0.0])]
    for a, b in zip(points[:-1], points[1:]):
        xs = np.linspace(a, b, 257)
        if span is None or fine is None:
            size = np.full_like(xs, coarse)
        else:
            dist = np.maximum(span[0] - xs, 0.0) + np.maximum(xs - span[1], 0.0)
            size = np.minimum(coarse, fine + (growth - 1.0) * dist)
        density = 1.0 / size
        cumulative = np.concatenate(
            [[0.0], np.cumsum(0.5 * (density[1:] + density[:-1]) * np.diff(xs))]
        )
        n_cells = max(1, math.ceil(cumulative[-1] - 1e-9))
        targets = np.linspace(0.0, cumulative[-1], n_cells + 1)
        segment = np.interp(targets, cumulative, xs)
        segment[-1] = b
        coords.append(segment[1:])
    return np.concatenate(coords)


def build_rect_mesh(
    width: float,
    height: float,
    nx: int,
    ny: int,
    band: RefinementBand | None = None,
    *,
    x_breaks: Sequence[float] = (),
    y_breaks: Sequence[float] = (),
    growth: float = 1.3,
) -> QuadMesh:
    """Build a structured mesh of the rectangle [0, width] x [0, height].

    Parameters
    ----------
    width, height
        Size of the rectangle in mm.
    nx, ny
        Number of elements along each side for the uniform grid. With a band
        they set the coarse spacing far from it.
    band
        Optional region meshed at the band spacing. Rows and columns crossing
        the band are refined over the whole rectangle (tensor-product grading),
        so the mesh stays conforming without transition templates.
    x_breaks, y_breaks
        Coordinates that must coincide with grid lines (notches, supports).
    growth
        Rate at which the spacing grows away from the band.

    Returns
    -------
    QuadMesh
        Mesh with node sets and side sets ``left``, ``right``, ``bottom`` and
        ``top``.

    Raises
    ------
    ValueError
        For nonpositive sizes or counts, or a band outside the rectangle.
    """
    if width <= 0 or height <= 0:
        raise ValueError("Rectangle dimensions must be positive.")
    if nx < 1 or ny < 1:
        raise ValueError("Element counts must be at least 1.")
    if band is not None and (
        band.x_min < 0 or band.y_min < 0 or band.x_max > width or band.y_max > height
    ):
        raise ValueError("Refinement band must lie inside the rectangle.")

    if band is None and not x_breaks:
        xs = np.linspace(0.0, width, nx + 1)
    else:
        xs = _graded_axis(
            width,
            width / nx,
            None if band is None else band.h,
            None if band is None else (band.x_min, band.x_max),
            x_breaks,
            growth,
        )
    if band is None and not y_breaks:
        ys = np.linspace(0.0, height, ny + 1)
    else:
        ys = _graded_axis(
            height,
            height / ny,
            None if band is None else band.h,
            None if band is None else (band.y_min, band.y_max),
            y_breaks,
            growth,
        )

    n_x, n_y = xs.size, ys.size
    grid_x, grid_y = np.meshgrid(xs, ys, indexing="xy")
    node_coords = np.column_stack([grid_x.ravel(), grid_y.ravel()])

    i, j = np.meshgrid(np.arange(n_x - 1), np.arange(n_y - 1), indexing="xy")
    i, j = i.ravel(), j.ravel()
    first = j * n_x + i
    elements = np.column_stack([first, first + 1, first + 1 + n_x, first + n_x])

    ex, ey = n_x - 1, n_y - 1
    node_ids = np.arange(n_x * n_y, dtype=np.int64).reshape(n_y, n_x)
    element_ids = np.arange(ex * ey, dtype=np.int64).reshape(ey, ex)
    node_sets = {
        "bottom": node_ids[0, :].copy(),
        "top": node_ids[-1, :].copy(),
        "left": node_ids[:, 0].copy(),
        "right": node_ids[:, -1].copy(),
    }
    side_sets = {
        "bottom": np.column_stack([element_ids[0, :], np.full(ex, 0)]),
        "right": np.column_stack([element_ids[:, -1], np.full(ey, 1)]),
        "top": np.column_stack([element_ids[-1, :], np.full(ex, 2)]),
        "left": np.column_stack([element_ids[:, 0], np.full(ey, 3)]),
    }
    mesh = QuadMesh(
        node_coords=node_coords,
        elements=elements.astype(np.int64),
        node_sets=node_sets,
        side_sets={k: v.astype(np.int64) for k, v in side_sets.items()},
    )
    logger.debug(
        f"Built {ex}x{ey} mesh of {width}x{height} mm, h in [{mesh.h_min:.3g},"
        f" {mesh.h_max:.3g}]"
    )
    return mesh


def cut_seam(
    mesh: QuadMesh,
    start: Sequence[float],
    end: Sequence[float],
    name: str = "seam",
) -> QuadMesh:
    """Open a crack along an axis-aligned segment by duplicating nodes.

    Nodes on the segment are duplicated except at a crack tip (an end that
    lies inside the domain). Elements above a horizontal seam, or right of a
    vertical one, use the copies. The faces on both sides are stored in the
    side set ``name``.

    Raises
    ------
    ValueError
        If the segment is not made of mesh edges.
    """
    p0 = np.asarray(start, dtype=np.float64)
    p1 = np.asarray(end, dtype=np.float64)
    length = float(np.linalg.norm(p1 - p0))
    if length == 0.0:
        return mesh
    horizontal = p0[1] == p1[1]
    if not horizontal and p0[0] != p1[0]:
        raise ValueError("Seam must be horizontal or vertical.")
    tol = 1e-9 * max(1.0, float(np.abs(mesh.node_coords).max()))
    mesh.find_node(p0, tol)
    mesh.find_node(p1, tol)

    axis, other = (0, 1) if horizontal else (1, 0)
    lo, hi = sorted((p0[axis], p1[axis]))
    coords = mesh.node_coords
    on_line = (np.abs(coords[:, other] - p0[other]) <= tol) & (
        (coords[:, axis] >= lo - tol) & (coords[:, axis] <= hi + tol)
    )

    edges, edge_of_side, counts = _unique_edges(mesh.elements)
    on_seam = on_line[edges].all(axis=1)
    covered = np.abs(coords[edges[on_seam, 0]] - coords[edges[on_seam, 1]]).sum()
    if not math.isclose(float(covered), length, rel_tol=1e-9):
        raise ValueError("Seam is not aligned with mesh edges.")

    seam_sides = np.flatnonzero(on_seam[edge_of_side])
    seam_set = np.column_stack([seam_sides // 4, seam_sides % 4]).astype(np.int64)
    side_sets = dict(mesh.side_sets)
    side_sets[name] = seam_set

    interior = on_seam & (counts == 2)
    if not interior.any():
        return QuadMesh(
            node_coords=mesh.node_coords,
            elements=mesh.elements,
            node_sets=mesh.node_sets,
            side_sets=side_sets,
        )

    on_boundary = np.zeros(mesh.n_nodes, dtype=bool)
    on_boundary[edges[counts == 1].ravel()] = True
    degree = np.bincount(edges[interior].ravel(), minlength=mesh.n_nodes)
    duplicate = (degree >= 2) | ((degree == 1) & on_boundary)
    originals = np.flatnonzero(duplicate)

    copies = mesh.n_nodes + np.arange(originals.size, dtype=np.int64)
    remap = np.arange(mesh.n_nodes, dtype=np.int64)
    remap[originals] = copies
    upper = mesh.centroids()[:, other] > p0[other]
    elements = mesh.elements.copy()
    elements[upper] = remap[elements[upper]]

    node_sets = {}
    for set_name, nodes in mesh.node_sets.items():
        extra = remap[nodes][duplicate[nodes]]
        node_sets[set_name] = np.union1d(nodes, extra)

    logger.debug(f"Seam '{name}' duplicated {originals.size} nodes")
    return QuadMesh(
        node_coords=np.vstack([mesh.node_coords, mesh.node_coords[originals]]),
        elements=elements,
        node_sets=node_sets,
        side_sets=side_sets,
    )


def remove_elements(
    mesh: QuadMesh,
    predicate: Callable[[FloatArray], BoolArray],
    name: str = "hole",
) -> QuadMesh:
    """Remove the elements whose centroid satisfies ``predicate``.

    Parameters
    ----------
    mesh
        Input mesh.
    predicate
        Vectorized test taking centroids of shape (n_elements, 2).
    name
        Side set receiving the newly exposed edges.

    Returns
    -------
    QuadMesh
        Compacted mesh without orphan nodes.

    Raises
    ------
    ValueError
        If nothing remains, the remainder falls apart, or a node set loses all
        of its nodes.
    """
    removed = np.asarray(predicate(mesh.centroids()), dtype=bool)
    if removed.shape != (mesh.n_elements,):
        raise ValueError("Predicate must return one boolean per element.")
    if not removed.any():
        return mesh
    if removed.all():
        raise ValueError("Predicate removes every element, the mesh would be empty.")

    _, edge_of_side, counts_before = _unique_edges(mesh.elements)
    keep = ~removed
    kept_ids = np.flatnonzero(keep)
    elements = mesh.elements[keep]

    used = np.zeros(mesh.n_nodes, dtype=bool)
    used[elements.ravel()] = True
    node_map = np.full(mesh.n_nodes, -1, dtype=np.int64)
    node_map[used] = np.arange(int(used.sum()), dtype=np.int64)
    element_map = np.full(mesh.n_elements, -1, dtype=np.int64)
    element_map[kept_ids] = np.arange(kept_ids.size, dtype=np.int64)
    new_elements = node_map[elements]

    incidence = sparse.csr_matrix(
        (
            np.ones(new_elements.size),
            (np.repeat(np.arange(kept_ids.size), 4), new_elements.ravel()),
        )
    )
    n_parts, _ = connected_components(incidence @ incidence.T, directed=False)
    if n_parts > 1:
        raise ValueError(f"Removal splits the mesh into {n_parts} parts.")

    node_sets = {}
    for set_name, nodes in mesh.node_sets.items():
        mapped = node_map[nodes]
        mapped = mapped[mapped >= 0]
        if nodes.size and not mapped.size:
            raise ValueError(f"Removal empties node set '{set_name}'.")
        node_sets[set_name] = mapped

    side_sets = {}
    for set_name, sides in mesh.side_sets.items():
        mapped = element_map[sides[:, 0]]
        side_sets[set_name] = np.column_stack([mapped, sides[:, 1]])[mapped >= 0]

    # Edges that were shared before and now have a single owner.
    kept_sides = (kept_ids[:, None] * 4 + np.arange(4)).ravel()
    counts_after = np.bincount(edge_of_side[kept_sides], minlength=counts_before.size)
    exposed = (counts_before == 2) & (counts_after == 1)
    new_sides = kept_sides[exposed[edge_of_side[kept_sides]]]
    hole = np.column_stack([element_map[new_sides // 4], new_sides % 4])
    if name in side_sets:
        hole = np.vstack([side_sets[name], hole])
    side_sets[name] = hole.astype(np.int64)

    logger.debug(f"Removed {int(removed.sum())} elements into side set '{name}'")
    return QuadMesh(
        node_coords=mesh.node_coords[used],
        elements=new_elements,
        node_sets=node_sets,
        side_sets=side_sets,
    )
