"""Lagrange P1/P3 triangles, quadrature and the mixed P3-P1 degree-of-freedom map.

The reference triangle is {(xi, eta): xi, eta >= 0, xi + eta <= 1} with
barycentric coordinates l0 = 1 - xi - eta, l1 = xi, l2 = eta.

P3 local node order: vertices 0, 1, 2; then two nodes per edge in the
order (0->1), (1->2), (2->0), the first of each pair nearer the edge's
starting vertex; finally the centroid.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .expr import Expression, eval_expression
from .mesh import TriangleMesh

log = logging.getLogger(__name__)

FIELDS = ("v1x", "v1y", "v2x", "v2y", "p1", "p2")
VELOCITY_FIELDS = FIELDS[:4]
PRESSURE_FIELDS = FIELDS[4:]

_DLAMBDA = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
_LOCAL_EDGES = ((0, 1), (1, 2), (2, 0))

DEFAULT_QUADRATURE_DEGREE = 8


class OutsideElementError(ValueError):
    pass


class ReferenceElement:
    """Scalar Lagrange element of order 1 or 3 on the reference triangle."""

    def __init__(self, order: int):
        if order not in (1, 3):
            raise ValueError(f"only P1 and P3 are available, got order {order}")
        self.order = order
        verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        if order == 1:
            self.nodes = verts
        else:
            nodes = list(verts)
            for i, j in _LOCAL_EDGES:
                nodes.append((2 * verts[i] + verts[j]) / 3)
                nodes.append((verts[i] + 2 * verts[j]) / 3)
            nodes.append(verts.mean(axis=0))
            self.nodes = np.array(nodes)
        self.node_count = len(self.nodes)

    def tabulate(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Values ``(npts, n)`` and reference gradients ``(npts, n, 2)``."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        xi, eta = pts[:, 0], pts[:, 1]
        lam = np.stack([1.0 - xi - eta, xi, eta], axis=1)
        if self.order == 1:
            values = lam
            dlam = np.broadcast_to(np.eye(3), (len(pts), 3, 3))
        else:
            values, dlam = _p3_barycentric(lam)
        grads = dlam @ _DLAMBDA
        return values, grads

    def shape_eval(self, point, tol: float = 1e-12):
        xi, eta = (float(c) for c in point)
        if xi < -tol or eta < -tol or xi + eta > 1 + tol:
            raise OutsideElementError(f"point ({xi}, {eta}) lies outside the reference triangle")
        values, grads = self.tabulate([[xi, eta]])
        return values[0], grads[0]


def _p3_barycentric(lam):
    """P3 basis values and derivatives with respect to (l0, l1, l2)."""
    npts = len(lam)
    values = np.empty((npts, 10))
    dlam = np.zeros((npts, 10, 3))
    for i in range(3):
        li = lam[:, i]
        values[:, i] = 0.5 * li * (3 * li - 1) * (3 * li - 2)
        dlam[:, i, i] = 0.5 * (27 * li**2 - 18 * li + 2)
    k = 3
    for i, j in _LOCAL_EDGES:
        for a, b in ((i, j), (j, i)):
            la, lb = lam[:, a], lam[:, b]
            values[:, k] = 4.5 * la * lb * (3 * la - 1)
            dlam[:, k, a] = 4.5 * lb * (6 * la - 1)
            dlam[:, k, b] = 4.5 * la * (3 * la - 1)
            k += 1
    l0, l1, l2 = lam.T
    values[:, 9] = 27 * l0 * l1 * l2
    dlam[:, 9] = 27 * np.stack([l1 * l2, l0 * l2, l0 * l1], axis=1)
    return values, dlam


P1 = ReferenceElement(1)
P3 = ReferenceElement(3)


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray
    degree: int

    def integrate(self, f) -> float:
        """Integrate ``f(xi, eta)`` over the reference triangle."""
        return float(np.dot(self.weights, f(self.points[:, 0], self.points[:, 1])))


@lru_cache(maxsize=None)
def quadrature_rule(degree: int) -> QuadratureRule:
    """Fully symmetric Xiao-Gimbutas rule exact for total degree >= ``degree``."""
    import modepy

    if int(degree) != degree or not 1 <= degree <= 10:
        raise ValueError(f"quadrature degree must be an integer in [1, 10], got {degree}")
    q = modepy.XiaoGimbutasSimplexQuadrature(int(degree), 2)
    # modepy works on the bi-unit triangle with vertices (-1,-1), (1,-1), (-1,1).
    points = (np.asarray(q.nodes).T + 1.0) / 2.0
    weights = np.asarray(q.weights) / 4.0
    points.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureRule(points, weights, int(q.exact_to))


def affine_map(mesh: TriangleMesh, triangle: int):
    """Jacobian, its determinant and inverse transpose for one triangle."""
    p = mesh.vertices[mesh.triangles[triangle]]
    jac = np.column_stack([p[1] - p[0], p[2] - p[0]])
    det = float(np.linalg.det(jac))
    if det <= 0:
        raise ValueError(f"triangle {triangle} is degenerate (det {det:g})")
    return jac, det, np.linalg.inv(jac).T


def affine_maps(mesh: TriangleMesh):
    """Vectorised :func:`affine_map` over all triangles."""
    p = mesh.vertices[mesh.triangles]
    jac = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)
    det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
    if np.any(det <= 0):
        raise ValueError("mesh contains degenerate triangles")
    inv_t = np.empty_like(jac)
    inv_t[:, 0, 0] = jac[:, 1, 1] / det
    inv_t[:, 1, 1] = jac[:, 0, 0] / det
    inv_t[:, 0, 1] = -jac[:, 1, 0] / det
    inv_t[:, 1, 0] = -jac[:, 0, 1] / det
    return jac, det, inv_t


@dataclass(frozen=True, eq=False)
class MixedDofMap:
    """Global layout ``[v1x | v1y | v2x | v2y | p1 | p2]``.

    Each velocity component is a scalar P3 field with ``n3`` coefficients,
    each pressure a P1 field with ``n1`` coefficients.  Scalar P3 numbering:
    vertices, then two per edge (the first nearer the lower-indexed
    vertex), then one per triangle.
    """

    n3: int
    n1: int
    cell_dofs3: np.ndarray
    cell_dofs1: np.ndarray
    nodes3: np.ndarray
    edge_dof_start: int
    cell_dof_start: int

    @property
    def offsets(self) -> dict:
        out, pos = {}, 0
        for name in FIELDS:
            out[name] = pos
            pos += self.n3 if name in VELOCITY_FIELDS else self.n1
        return out

    @property
    def size(self) -> int:
        return 4 * self.n3 + 2 * self.n1

    @property
    def n_velocity(self) -> int:
        return 4 * self.n3

    def count(self, name: str) -> int:
        return self.n3 if name in VELOCITY_FIELDS else self.n1

    def field_slice(self, name: str) -> slice:
        start = self.offsets[name]
        return slice(start, start + self.count(name))

    def field_range(self, name: str) -> np.ndarray:
        s = self.field_slice(name)
        return np.arange(s.start, s.stop)

    def node_coords(self, name: str) -> np.ndarray:
        return self.nodes3 if name in VELOCITY_FIELDS else self.nodes3[: self.n1]

    def edge_dofs(self, edge: int) -> tuple[int, int]:
        start = self.edge_dof_start + 2 * edge
        return start, start + 1


def build_mixed_dof_map(mesh: TriangleMesh) -> MixedDofMap:
    nv, ne, nt = mesh.n_vertices, mesh.n_edges, mesh.n_triangles
    edge_start = nv
    cell_start = nv + 2 * ne
    n3 = cell_start + nt

    tri = mesh.triangles
    dofs = np.empty((nt, 10), dtype=np.int64)
    dofs[:, :3] = tri
    for k, (i, j) in enumerate(_LOCAL_EDGES):
        e = mesh.triangle_edges[:, k]
        forward = tri[:, i] < tri[:, j]
        first = edge_start + 2 * e
        dofs[:, 3 + 2 * k] = np.where(forward, first, first + 1)
        dofs[:, 4 + 2 * k] = np.where(forward, first + 1, first)
    dofs[:, 9] = cell_start + np.arange(nt)

    nodes = np.empty((n3, 2))
    nodes[:nv] = mesh.vertices
    a = mesh.vertices[mesh.edges[:, 0]]
    b = mesh.vertices[mesh.edges[:, 1]]
    nodes[edge_start:cell_start:2] = (2 * a + b) / 3
    nodes[edge_start + 1 : cell_start : 2] = (a + 2 * b) / 3
    nodes[cell_start:] = mesh.vertices[tri].mean(axis=1)
    return MixedDofMap(n3, nv, dofs, tri.copy(), nodes, edge_start, cell_start)


def _evaluate(expression, x, y, t):
    if isinstance(expression, Expression):
        return eval_expression(expression, x, y, t)
    return np.broadcast_to(np.asarray(expression(x, y, t), dtype=float), np.shape(x))


def interpolate_field(mesh, dofmap: MixedDofMap, field: str, expression, t: float = 0.0) -> np.ndarray:
    """Nodal interpolant of ``expression`` (an Expression or ``f(x, y, t)``)."""
    if field not in FIELDS:
        raise ValueError(f"unknown field {field!r}")
    xy = dofmap.node_coords(field)
    return np.array(_evaluate(expression, xy[:, 0], xy[:, 1], t), dtype=float)


@dataclass(frozen=True, eq=False)
class ElementTables:
    """Quadrature points, weights and basis tables for every triangle."""

    rule: QuadratureRule
    points: np.ndarray  # (T, nq, 2) physical coordinates
    weights: np.ndarray  # (T, nq) physical weights (det J folded in)
    n3: np.ndarray  # (nq, 10)
    grad3: np.ndarray  # (T, nq, 10, 2)
    n1: np.ndarray  # (nq, 3)
    grad1: np.ndarray  # (T, 3, 2)

    @classmethod
    def build(cls, mesh: TriangleMesh, degree: int = DEFAULT_QUADRATURE_DEGREE) -> "ElementTables":
        if degree < 6:
            warnings.warn(
                f"quadrature degree {degree} < 6 does not integrate P3 mass terms exactly",
                stacklevel=2,
            )
        rule = quadrature_rule(degree)
        _, det, inv_t = affine_maps(mesh)
        p = mesh.vertices[mesh.triangles]
        lam = np.column_stack([1 - rule.points.sum(axis=1), rule.points])
        points = np.einsum("qk,tkd->tqd", lam, p)
        weights = det[:, None] * rule.weights[None, :]
        n3, g3ref = P3.tabulate(rule.points)
        n1, g1ref = P1.tabulate(rule.points)
        grad3 = np.einsum("tij,qaj->tqai", inv_t, g3ref)
        grad1 = np.einsum("tij,aj->tai", inv_t, g1ref[0])
        return cls(rule, points, weights, n3, grad3, n1, grad1)

    def values3(self, cell_dofs3, coeffs):
        """P3 field values at all quadrature points, shape (T, nq)."""
        return coeffs[cell_dofs3] @ self.n3.T

    def values1(self, cell_dofs1, coeffs):
        return coeffs[cell_dofs1] @ self.n1.T

    def integrate(self, values) -> float:
        return float(np.sum(self.weights * values))


def integrate_scalar(mesh: TriangleMesh, integrand, degree: int = DEFAULT_QUADRATURE_DEGREE) -> float:
    """Integrate ``integrand(x, y)`` (vectorised) over the mesh."""
    rule = quadrature_rule(degree)
    _, det, _ = affine_maps(mesh)
    p = mesh.vertices[mesh.triangles]
    lam = np.column_stack([1 - rule.points.sum(axis=1), rule.points])
    pts = np.einsum("qk,tkd->tqd", lam, p)
    vals = np.asarray(integrand(pts[..., 0], pts[..., 1]), dtype=float)
    vals = np.broadcast_to(vals, pts.shape[:2])
    return float(np.sum(det[:, None] * rule.weights[None, :] * vals))
