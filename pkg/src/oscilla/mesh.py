"""
Structured boundary-fitted triangulations.

Meshes of the basic cell Y* = {0 < y < L, 0 < z < g(y)} and of the thin
strip R^eps = {0 < phi < 2 pi, 0 < theta < eps g(phi/eps)} are obtained by
mapping a rectangular lattice (x_i, s_j) to (x_i, s_j H(x_i)), where H is the
upper boundary. Every lattice cell is cut into two triangles with alternating
diagonals.
"""

import math
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Optional, TextIO, Tuple

import numpy as np

from oscilla import config
from oscilla.exceptions import ConfigError, DegenerateMesh, ResourceLimit
from oscilla.profile import BoundaryProfile, EpsilonValue

logger = logging.getLogger(__name__)

B1_TOP = 'B1_top'
B2_BOTTOM = 'B2_bottom'
LATERAL = 'lateral'

CELL = 'cell'
STRIP = 'strip'
BOX = 'box'


@dataclass(eq=False)
class TriMesh:
    """
    A structured triangulation with periodic pairing and tagged boundary edges.

    Vertex (i, j) of the lattice, 0 <= i <= ncols, 0 <= j <= nrows, has index
    j * (ncols + 1) + i. Lattice cell (i, j) owns triangles 2 * (j * ncols + i)
    and 2 * (j * ncols + i) + 1. Boundary edges are stored counterclockwise so
    that the outward normal is the tangent turned clockwise.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    periodic_slaves: np.ndarray
    periodic_masters: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: Tuple[str, ...]
    kind: str
    columns: np.ndarray
    heights: np.ndarray
    nrows: int
    profile: Optional[BoundaryProfile] = None
    eps: Optional[EpsilonValue] = None

    @property
    def ncols(self) -> int:
        """Number of lattice columns (periodic pairs counted once)."""
        return len(self.columns) - 1

    @property
    def period(self) -> float:
        """Horizontal extent: L for a cell mesh, 2 pi for a strip."""
        return float(self.columns[-1] - self.columns[0])

    @property
    def num_vertices(self) -> int:
        """Vertex count, periodic slaves included."""
        return len(self.vertices)

    @property
    def num_triangles(self) -> int:
        """Number of triangles."""
        return len(self.triangles)

    @property
    def is_periodic(self) -> bool:
        """True when the lateral sides are paired."""
        return len(self.periodic_slaves) > 0

    @property
    def periodic_map(self) -> Dict[int, int]:
        """Slave vertex -> master vertex."""
        return dict(zip(self.periodic_slaves.tolist(), self.periodic_masters.tolist()))

    @cached_property
    def signed_areas(self) -> np.ndarray:
        """Triangle areas, positive for counterclockwise triangles."""
        p = self.vertices[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @cached_property
    def basis_gradients(self) -> np.ndarray:
        """Constant gradients of the three barycentric functions, shape (T, 3, 2)."""
        p = self.vertices[self.triangles]
        x, y = p[:, :, 0], p[:, :, 1]
        two_area = 2.0 * self.signed_areas
        grads = np.empty((self.num_triangles, 3, 2))
        for a in range(3):
            b, c = (a + 1) % 3, (a + 2) % 3
            grads[:, a, 0] = (y[:, b] - y[:, c]) / two_area
            grads[:, a, 1] = (x[:, c] - x[:, b]) / two_area
        return grads

    @cached_property
    def dof_map(self) -> np.ndarray:
        """Full vertex index -> reduced degree of freedom (slaves share their master's dof)."""
        owner = np.arange(self.num_vertices)
        owner[self.periodic_slaves] = self.periodic_masters
        _, reduced = np.unique(owner, return_inverse=True)
        return reduced.reshape(-1)

    @property
    def num_dofs(self) -> int:
        """Number of reduced degrees of freedom."""
        return int(self.dof_map.max()) + 1

    def edges_with_tag(self, tag: str) -> np.ndarray:
        """
        Boundary edges carrying a tag.

        Args:
            tag: One of B1_TOP, B2_BOTTOM, LATERAL.

        Returns:
            Array of (start, end) vertex pairs in counterclockwise order.
        """
        mask = np.array([t == tag for t in self.boundary_tags], dtype=bool)
        return self.boundary_edges[mask] if len(mask) else self.boundary_edges[:0]

    def top_vertices(self) -> np.ndarray:
        """Vertices of the upper boundary row, left to right."""
        return self.nrows * (self.ncols + 1) + np.arange(self.ncols + 1)

    def bottom_vertices(self) -> np.ndarray:
        """Vertices of the bottom row, left to right."""
        return np.arange(self.ncols + 1)


def _build_lattice(columns: np.ndarray, heights: np.ndarray, nrows: int, kind: str,
                   periodic: bool, max_triangles: Optional[int] = None,
                   profile: Optional[BoundaryProfile] = None,
                   eps: Optional[EpsilonValue] = None) -> TriMesh:
    ncols = len(columns) - 1
    cap = config.MAX_TRIANGLES if max_triangles is None else max_triangles
    if 2 * ncols * nrows > cap:
        raise ResourceLimit(f"mesh needs {2 * ncols * nrows} triangles, cap is {cap}")

    s = np.arange(nrows + 1) / nrows
    xs = np.tile(columns, nrows + 1)
    zs = np.outer(s, heights).reshape(-1)
    vertices = np.column_stack([xs, zs])

    def idx(i, j):
        return j * (ncols + 1) + i

    jj, ii = np.meshgrid(np.arange(nrows), np.arange(ncols), indexing='ij')
    ii, jj = ii.reshape(-1), jj.reshape(-1)
    v00, v10 = idx(ii, jj), idx(ii + 1, jj)
    v01, v11 = idx(ii, jj + 1), idx(ii + 1, jj + 1)
    even = (ii + jj) % 2 == 0
    first = np.where(even[:, None], np.column_stack([v00, v10, v11]), np.column_stack([v00, v10, v01]))
    second = np.where(even[:, None], np.column_stack([v00, v11, v01]), np.column_stack([v10, v11, v01]))
    triangles = np.empty((2 * len(ii), 3), dtype=np.int64)
    triangles[0::2] = first
    triangles[1::2] = second

    rows = np.arange(nrows + 1)
    cols = np.arange(ncols)
    if periodic:
        slaves = idx(ncols, rows)
        masters = idx(0, rows)
    else:
        slaves = masters = np.zeros(0, dtype=np.int64)

    edges: List[Tuple[int, int]] = []
    tags: List[str] = []
    for i in cols:
        edges.append((idx(i, 0), idx(i + 1, 0)))
        tags.append(B2_BOTTOM)
    for j in range(nrows):
        edges.append((idx(ncols, j), idx(ncols, j + 1)))
        tags.append(LATERAL)
    for i in cols[::-1]:
        edges.append((idx(i + 1, nrows), idx(i, nrows)))
        tags.append(B1_TOP)
    for j in range(nrows - 1, -1, -1):
        edges.append((idx(0, j + 1), idx(0, j)))
        tags.append(LATERAL)

    mesh = TriMesh(
        vertices=vertices,
        triangles=triangles,
        periodic_slaves=np.asarray(slaves, dtype=np.int64),
        periodic_masters=np.asarray(masters, dtype=np.int64),
        boundary_edges=np.array(edges, dtype=np.int64),
        boundary_tags=tuple(tags),
        kind=kind,
        columns=columns,
        heights=heights,
        nrows=nrows,
        profile=profile,
        eps=eps,
    )
    # cannot fail for a positive profile
    if np.any(mesh.signed_areas <= 0.0):
        bad = int(np.argmin(mesh.signed_areas))
        raise DegenerateMesh(f"triangle {bad} has signed area {mesh.signed_areas[bad]:.3e}")
    return mesh


def build_cell_mesh(profile: BoundaryProfile, ny: int, nz: int,
                    max_triangles: Optional[int] = None) -> TriMesh:
    """
    Triangulate the basic cell Y* with an (ny x nz) lattice.

    The column y = L is paired with y = 0 and carries exactly the same heights.
    """
    if ny < 2 or nz < 1:
        raise ConfigError(f"cell mesh needs ny >= 2 and nz >= 1, got ny={ny}, nz={nz}")
    L = profile.period
    columns = L * np.arange(ny + 1) / ny
    columns[-1] = L
    heights = profile.eval(columns)
    heights[-1] = heights[0]
    mesh = _build_lattice(columns, heights, nz, CELL, True, max_triangles, profile=profile)
    logger.debug(f"Cell mesh {ny}x{nz}: {mesh.num_vertices} vertices, {mesh.num_triangles} triangles")
    return mesh


def build_strip_mesh(profile: BoundaryProfile, eps: EpsilonValue, ny_per_cell: int, nz: int,
                     max_triangles: Optional[int] = None) -> TriMesh:
    """
    Triangulate R^eps with ny_per_cell columns in each of the a*m oscillation cells.
    """
    if ny_per_cell < 2 or nz < 1:
        raise ConfigError(f"strip mesh needs ny_per_cell >= 2 and nz >= 1, got {ny_per_cell}, {nz}")
    ncols = eps.cells(profile) * ny_per_cell
    two_pi = 2.0 * math.pi
    columns = two_pi * np.arange(ncols + 1) / ncols
    columns[-1] = two_pi
    e = eps.value
    heights = e * profile.eval(columns / e)
    heights[-1] = heights[0]
    mesh = _build_lattice(columns, heights, nz, STRIP, True, max_triangles, profile=profile, eps=eps)
    logger.info(f"Strip mesh eps={eps}: {mesh.num_vertices} vertices, {mesh.num_triangles} triangles")
    return mesh


def build_box_mesh(width: float, height: float, nx: int, ny: int) -> TriMesh:
    """Non-periodic rectangle [0, width] x [0, height], used for solver checks."""
    columns = width * np.arange(nx + 1) / nx
    heights = np.full(nx + 1, float(height))
    return _build_lattice(columns, heights, ny, BOX, False)


def mesh_area(mesh: TriMesh) -> float:
    """
    Total area of a triangulation.

    Args:
        mesh: Any TriMesh.

    Returns:
        Sum of the triangle areas.
    """
    return float(np.sum(mesh.signed_areas))


def mesh_h(mesh: TriMesh) -> float:
    """
    Mesh size h.

    Args:
        mesh: Any TriMesh.

    Returns:
        The largest edge length.
    """
    p = mesh.vertices[mesh.triangles]
    lengths = [np.linalg.norm(p[:, (a + 1) % 3] - p[:, a], axis=1) for a in range(3)]
    return float(np.max(lengths))


def edge_incidence(mesh: TriMesh) -> Dict[Tuple[int, int], int]:
    """Number of triangles sharing each (sorted) edge."""
    counts: Dict[Tuple[int, int], int] = {}
    for tri in mesh.triangles.tolist():
        for a in range(3):
            key = tuple(sorted((tri[a], tri[(a + 1) % 3])))
            counts[key] = counts.get(key, 0) + 1
    return counts


def write_mesh(mesh: TriMesh, stream: TextIO, values: Optional[np.ndarray] = None) -> None:
    """
    Write the plain-text mesh format.

    Lines: "v x y", "t i j k", "p slave master", "b edge_id tag i j", and, when
    nodal values are given, "u vertex value".
    """
    for x, y in mesh.vertices:
        stream.write(f"v {x!r} {y!r}\n")
    for i, j, k in mesh.triangles:
        stream.write(f"t {i} {j} {k}\n")
    for s, m in zip(mesh.periodic_slaves, mesh.periodic_masters):
        stream.write(f"p {s} {m}\n")
    for e, ((i, j), tag) in enumerate(zip(mesh.boundary_edges, mesh.boundary_tags)):
        stream.write(f"b {e} {tag} {i} {j}\n")
    if values is not None:
        for n, value in enumerate(values):
            stream.write(f"u {n} {float(value)!r}\n")
