"""Structured triangulations of the unit square."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

OUTWARD_NORMALS = {
    "left": (-1.0, 0.0),
    "right": (1.0, 0.0),
    "bottom": (0.0, -1.0),
    "top": (0.0, 1.0),
}

MAGIC = "dppmesh 1"


class MeshError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class BoundaryFacet:
    edge: int
    side: str
    normal: tuple[float, float]


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    """Triangle mesh with derived edge and boundary-facet tables.

    ``edges`` holds sorted vertex pairs in lexicographic order;
    ``triangle_edges[t, k]`` joins local vertices ``k`` and ``(k + 1) % 3``.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray
    triangle_edges: np.ndarray
    boundary_facets: tuple[BoundaryFacet, ...]

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def __eq__(self, other):
        if not isinstance(other, TriangleMesh):
            return NotImplemented
        return (
            np.array_equal(self.vertices, other.vertices)
            and np.array_equal(self.triangles, other.triangles)
            and np.array_equal(self.edges, other.edges)
            and np.array_equal(self.triangle_edges, other.triangle_edges)
            and [(f.edge, f.side, f.normal) for f in self.boundary_facets]
            == [(f.edge, f.side, f.normal) for f in other.boundary_facets]
        )

    __hash__ = None

    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def _side_of_edge(p, q):
    for side, axis, value in (("left", 0, 0.0), ("right", 0, 1.0), ("bottom", 1, 0.0), ("top", 1, 1.0)):
        if p[axis] == value and q[axis] == value:
            return side
    return None


def build_mesh(vertices, triangles) -> TriangleMesh:
    """Derive edges and tagged boundary facets; checks orientation and connectivity."""
    vertices = np.array(vertices, dtype=float).reshape(-1, 2)
    triangles = np.array(triangles, dtype=np.int64).reshape(-1, 3)
    nv = len(vertices)
    if len(triangles) == 0:
        raise MeshError("mesh has no triangles")
    if triangles.min() < 0 or triangles.max() >= nv:
        raise MeshError(f"triangle references a vertex outside [0, {nv})")
    p = vertices[triangles]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    area = 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    bad = np.flatnonzero(area <= 0)
    if bad.size:
        raise MeshError(f"triangle {bad[0]} is degenerate or clockwise (signed area {area[bad[0]]:g})")

    local = triangles[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 3, 2)
    all_edges = np.sort(local, axis=2).reshape(-1, 2)
    edges, inverse, counts = np.unique(all_edges, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    if counts.max() > 2:
        raise MeshError("an edge is shared by more than two triangles")
    triangle_edges = inverse.reshape(-1, 3)

    facets = []
    for e in np.flatnonzero(counts == 1):
        a, b = edges[e]
        side = _side_of_edge(vertices[a], vertices[b])
        if side is None:
            raise MeshError(f"boundary edge {e} does not lie on a side of the unit square")
        facets.append(BoundaryFacet(int(e), side, OUTWARD_NORMALS[side]))
    return TriangleMesh(vertices, triangles, edges, triangle_edges, tuple(facets))


def generate_unit_square_mesh(nx: int = 20, ny: int = 20) -> TriangleMesh:
    """Uniform grid, each cell split along its lower-left to upper-right diagonal."""
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise MeshError(f"cell counts must be integers >= 1, got nx={nx}, ny={ny}")
    nx, ny = int(nx), int(ny)
    xs = np.arange(nx + 1) / nx
    ys = np.arange(ny + 1) / ny
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    a = (j * (nx + 1) + i).ravel()
    b = a + 1
    c = a + nx + 2
    d = a + nx + 1
    tris = np.empty((2 * nx * ny, 3), dtype=np.int64)
    tris[0::2] = np.column_stack([a, b, c])
    tris[1::2] = np.column_stack([a, c, d])
    return build_mesh(vertices, tris)


def boundary_vertices_on_side(mesh: TriangleMesh, side: str) -> np.ndarray:
    """Sorted indices of vertices on ``side``, corners included."""
    if side not in OUTWARD_NORMALS:
        raise MeshError(f"unknown side tag {side!r}")
    axis, value = {"left": (0, 0.0), "right": (0, 1.0), "bottom": (1, 0.0), "top": (1, 1.0)}[side]
    return np.flatnonzero(mesh.vertices[:, axis] == value)


def boundary_edges_on_side(mesh: TriangleMesh, side: str) -> np.ndarray:
    return np.array([f.edge for f in mesh.boundary_facets if f.side == side], dtype=np.int64)


def export_mesh(mesh: TriangleMesh) -> str:
    lines = [MAGIC, f"{mesh.n_vertices} {mesh.n_triangles}"]
    lines += [f"{x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    lines += [f"{i} {j} {k}" for i, j, k in mesh.triangles.tolist()]
    return "\n".join(lines) + "\n"


def import_mesh(text: str) -> TriangleMesh:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != MAGIC:
        raise MeshError(f"missing header line {MAGIC!r}")
    try:
        nv, nt = (int(tok) for tok in lines[1].split())
    except (IndexError, ValueError):
        raise MeshError("line 2 must hold the vertex and triangle counts") from None
    if nv < 3 or nt < 1:
        raise MeshError(f"invalid counts: {nv} vertices, {nt} triangles")
    body = lines[2:]
    if len(body) != nv + nt:
        raise MeshError(f"expected {nv + nt} data lines after the header, found {len(body)}")
    try:
        vertices = [[float(v) for v in ln.split()] for ln in body[:nv]]
        triangles = [[int(v) for v in ln.split()] for ln in body[nv:]]
    except ValueError as exc:
        raise MeshError(f"malformed data line: {exc}") from None
    if any(len(v) != 2 for v in vertices) or any(len(t) != 3 for t in triangles):
        raise MeshError("vertex lines need 2 values and triangle lines 3 indices")
    return build_mesh(vertices, triangles)
