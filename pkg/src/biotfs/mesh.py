"""Structured triangulations of the unit square and Taylor-Hood dof maps.

The mesh splits each of the n x n grid cells along its (+1,+1) diagonal into
two triangles. Vertices are numbered lexicographically by (y, x), which makes
every construction bit-deterministic. Displacements carry two components per
P2 node (vertices plus edge midpoints), pressure one value per vertex.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np


class DofTag(IntEnum):
    """Boundary classification of a degree of freedom."""

    INTERIOR = 0
    DIRICHLET_MOMENTUM = 1
    NEUMANN_TOP = 2
    DIRICHLET_FLOW = 3


@dataclass(frozen=True)
class Mesh:
    """Triangulation of the unit square with n subdivisions per side.

    Attributes
    ----------
    n : int
        Subdivisions per side; the mesh diameter is h = 1/n.
    vertices : ndarray, shape (nv, 2)
        Vertex coordinates, ordered lexicographically by (y, x).
    triangles : ndarray, shape (nt, 3)
        Vertex indices per triangle, counterclockwise.
    edges : ndarray, shape (ne, 2)
        Unique edges as sorted index pairs, in lexicographic order.
    """

    n: int
    vertices: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_triangles(self) -> int:
        return self.triangles.shape[0]

    @property
    def num_edges(self) -> int:
        return self.edges.shape[0]

    @property
    def h(self) -> float:
        return 1.0 / self.n


def build_structured_mesh(n: int) -> Mesh:
    """Build the diagonal-split structured triangulation of the unit square.

    Parameters
    ----------
    n : int
        Number of subdivisions per side, must be >= 1.

    Returns
    -------
    Mesh
        2*n^2 triangles on (n+1)^2 vertices with deterministic ordering.
    """
    if n < 1:
        raise ValueError(f"mesh subdivisions must be >= 1, got {n}")

    side = np.arange(n + 1, dtype=float) / n
    xg, yg = np.meshgrid(side, side, indexing="xy")
    vertices = np.column_stack([xg.ravel(), yg.ravel()])

    ix, iy = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    v00 = (iy * (n + 1) + ix).ravel()
    v10 = v00 + 1
    v01 = v00 + (n + 1)
    v11 = v01 + 1

    # Cell split along the (+1,+1) diagonal: lower (v00,v10,v11) and upper
    # (v00,v11,v01), both counterclockwise.
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.empty((2 * n * n, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper

    raw = np.vstack(
        [
            triangles[:, [0, 1]],
            triangles[:, [1, 2]],
            triangles[:, [2, 0]],
        ]
    )
    raw.sort(axis=1)
    edges = np.unique(raw, axis=0)

    return Mesh(n=n, vertices=vertices, triangles=triangles, edges=edges)


def triangle_areas(mesh: Mesh) -> np.ndarray:
    """Signed triangle areas, positive for counterclockwise orientation."""
    v = mesh.vertices[mesh.triangles]
    d1 = v[:, 1] - v[:, 0]
    d2 = v[:, 2] - v[:, 0]
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def mesh_to_text(mesh: Mesh) -> str:
    """Plain-text mesh dump: one 'v x y' line per vertex, one 't i j k' per
    triangle. Intended for debugging and external cross-checks."""
    lines = [f"v {float(x)!r} {float(y)!r}" for x, y in mesh.vertices]
    lines += [f"t {i} {j} {k}" for i, j, k in mesh.triangles]
    return "\n".join(lines) + "\n"


def write_mesh_text(mesh: Mesh, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(mesh_to_text(mesh))


@dataclass(frozen=True)
class DofMap:
    """Taylor-Hood (vector P2 / scalar P1) degrees of freedom with tags.

    Displacement dofs are interleaved: node k owns dofs 2k (x component) and
    2k+1 (y component). P2 nodes list the mesh vertices first, then one
    midpoint node per mesh edge. Pressure dofs coincide with the vertices.
    """

    mesh: Mesh
    node_coords: np.ndarray  # (num_nodes, 2) P2 node positions
    tri_nodes: np.ndarray  # (nt, 6) P2 node indices per triangle
    u_node_tags: np.ndarray  # (num_nodes,) tag shared by both components
    p_tags: np.ndarray  # (nv,)

    @property
    def num_nodes(self) -> int:
        return self.node_coords.shape[0]

    @property
    def num_displacement_dofs(self) -> int:
        return 2 * self.num_nodes

    @property
    def num_pressure_dofs(self) -> int:
        return self.mesh.num_vertices

    @property
    def u_dof_tags(self) -> np.ndarray:
        """Per-dof displacement tags (both components share the node tag)."""
        return np.repeat(self.u_node_tags, 2)

    @property
    def free_u(self) -> np.ndarray:
        """Indices of displacement dofs kept after Dirichlet elimination."""
        nodes = np.flatnonzero(self.u_node_tags != DofTag.DIRICHLET_MOMENTUM)
        return (2 * np.repeat(nodes, 2) + np.tile([0, 1], nodes.size)).astype(np.int64)

    @property
    def free_p(self) -> np.ndarray:
        """Indices of pressure dofs kept after Dirichlet elimination."""
        return np.flatnonzero(self.p_tags == DofTag.INTERIOR).astype(np.int64)


def build_taylor_hood_dofs(mesh: Mesh) -> DofMap:
    """Number the P2/P1 dofs of a structured mesh and classify the boundary.

    Momentum gets homogeneous Dirichlet conditions on the left, right and
    bottom sides and a traction-free (Neumann) top side; the two top corners
    count as Dirichlet. Flow gets homogeneous Dirichlet conditions on the
    whole boundary.
    """
    nv = mesh.num_vertices
    midpoints = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
    node_coords = np.vstack([mesh.vertices, midpoints])

    # Map each triangle edge to its midpoint node through the sorted unique
    # edge table (keys are strictly increasing, so searchsorted is exact).
    keys = mesh.edges[:, 0] * nv + mesh.edges[:, 1]
    tri = mesh.triangles
    tri_nodes = np.empty((mesh.num_triangles, 6), dtype=np.int64)
    tri_nodes[:, :3] = tri
    for local, (a, b) in enumerate(((0, 1), (1, 2), (2, 0))):
        lo = np.minimum(tri[:, a], tri[:, b])
        hi = np.maximum(tri[:, a], tri[:, b])
        tri_nodes[:, 3 + local] = nv + np.searchsorted(keys, lo * nv + hi)

    x, y = node_coords[:, 0], node_coords[:, 1]
    on_boundary = (x == 0.0) | (x == 1.0) | (y == 0.0) | (y == 1.0)
    open_top = (y == 1.0) & (x > 0.0) & (x < 1.0)
    u_node_tags = np.full(node_coords.shape[0], DofTag.INTERIOR, dtype=np.int64)
    u_node_tags[on_boundary] = DofTag.DIRICHLET_MOMENTUM
    u_node_tags[open_top] = DofTag.NEUMANN_TOP

    p_tags = np.full(nv, DofTag.INTERIOR, dtype=np.int64)
    p_tags[on_boundary[:nv]] = DofTag.DIRICHLET_FLOW

    return DofMap(
        mesh=mesh,
        node_coords=node_coords,
        tri_nodes=tri_nodes,
        u_node_tags=u_node_tags,
        p_tags=p_tags,
    )
