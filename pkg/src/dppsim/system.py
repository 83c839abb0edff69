"""Assembly, constraints and backward Euler time stepping of the coupled system.

Unknown vector ``x = [v1x, v1y, v2x, v2y, p1, p2]`` (see :mod:`dppsim.fem`).
Weak form, tested against the trial spaces and without integration by
parts (all fields are continuous)::

    (rho_i dv_i/dt, w) + (phi_i^2 drag_i v_i, w) + (phi_i grad p_i, w) = (rho_i b_i, w)
    (phi_1 div v_1, q) + (beta/mu (p1 - p2), q) = (g_1, q)
    (phi_2 div v_2, q) - (beta/mu (p1 - p2), q) = (g_2, q)

Written as ``M dx/dt + A x = F(t)``; ``M`` vanishes on the pressure rows so
the pressures are algebraic unknowns.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .expr import Expression, eval_expression
from .fem import (
    DEFAULT_QUADRATURE_DEGREE,
    FIELDS,
    ElementTables,
    MixedDofMap,
    build_mixed_dof_map,
    interpolate_field,
)
from .mesh import OUTWARD_NORMALS, TriangleMesh, boundary_edges_on_side, boundary_vertices_on_side
from .model import (
    BodyForceSpec,
    BoundaryConditionSpec,
    InitialConditionSpec,
    MediumParameters,
    SIDES,
    no_flow_boundary,
    validate_parameters,
)

log = logging.getLogger(__name__)

# pivots below this fraction of the largest |U_jj| are reported as singular
SINGULAR_PIVOT_RTOL = 1e-13


class SingularSystemError(RuntimeError):
    def __init__(self, message: str, dof: int | None = None):
        self.dof = dof
        super().__init__(message)


class StepFailure(RuntimeError):
    def __init__(self, step: int, cause: Exception):
        self.step = step
        super().__init__(f"time step {step} failed: {cause}")


@dataclass(frozen=True)
class Pin:
    """Point value for one network's pressure at a mesh vertex."""

    network: int
    vertex: int
    value: float = 0.0


@dataclass
class SolverConfig:
    dt: float = 0.001
    t_end: float = 2.0
    quadrature_degree: int = DEFAULT_QUADRATURE_DEGREE
    pins: Sequence[Pin] | None = None  # None: automatic
    g1: object = None  # mass-source slots, manufactured solutions only
    g2: object = None

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.t_end >= self.dt:
            raise ValueError(f"t_end ({self.t_end}) must be at least dt ({self.dt})")


@dataclass(frozen=True, eq=False)
class TransientState:
    time: float
    coefficients: np.ndarray

    def field(self, dofmap: MixedDofMap, name: str) -> np.ndarray:
        return self.coefficients[dofmap.field_slice(name)]

    def velocity(self, dofmap: MixedDofMap) -> np.ndarray:
        return self.coefficients[: dofmap.n_velocity]


def _evaluate(fn, x, y, t):
    if isinstance(fn, Expression):
        return eval_expression(fn, x, y, t)
    return np.broadcast_to(np.asarray(fn(x, y, t), dtype=float), np.shape(x))


@dataclass(eq=False)
class Constraints:
    """Essential conditions: constrained dof indices plus a value provider."""

    dofs: np.ndarray
    groups: list = field(default_factory=list)  # (dof slice in self.dofs, coords, fn, scale)
    pin_dofs: tuple = ()

    def values(self, t: float) -> np.ndarray:
        out = np.zeros(len(self.dofs))
        for sl, xy, fn, scale in self.groups:
            out[sl] = scale * _evaluate(fn, xy[:, 0], xy[:, 1], t)
        return out


def _side_p3_nodes(mesh: TriangleMesh, dofmap: MixedDofMap, side: str) -> np.ndarray:
    nodes = list(boundary_vertices_on_side(mesh, side))
    for e in boundary_edges_on_side(mesh, side):
        nodes.extend(dofmap.edge_dofs(int(e)))
    return np.array(sorted(nodes), dtype=np.int64)


def default_pins(mesh: TriangleMesh, params: MediumParameters, bcs: BoundaryConditionSpec) -> list[Pin]:
    """Pins needed to remove the constant pressure null space.

    With beta > 0 the transfer term couples the networks and one pin on
    network 1 suffices; with beta = 0 each network lacking a pressure
    boundary needs its own.
    """
    vertex = int(np.argmin(np.hypot(mesh.vertices[:, 0], mesh.vertices[:, 1])))
    has_p = [bool(bcs.pressure_sides(n)) for n in (1, 2)]
    if params.beta > 0:
        return [] if any(has_p) else [Pin(1, vertex)]
    return [Pin(n, vertex) for n in (1, 2) if not has_p[n - 1]]


def build_constraints(mesh, dofmap, bcs: BoundaryConditionSpec, pins: Sequence[Pin]) -> Constraints:
    offsets = dofmap.offsets
    chosen: dict[int, None] = {}
    groups = []
    pos = 0

    def add(dofs, xy, fn, scale):
        nonlocal pos
        keep = np.array([d not in chosen for d in dofs], dtype=bool)
        dofs, xy = dofs[keep], xy[keep]
        for d in dofs:
            chosen[int(d)] = None
        groups.append((slice(pos, pos + len(dofs)), xy, fn, scale))
        pos += len(dofs)

    for network in (1, 2):
        for side in SIDES:
            cond = bcs.side(network, side)
            nx_, ny_ = OUTWARD_NORMALS[side]
            if cond.kind == "velocity":
                comp, scale = ("x", nx_) if nx_ != 0 else ("y", ny_)
                nodes = _side_p3_nodes(mesh, dofmap, side)
                dofs = offsets[f"v{network}{comp}"] + nodes
                add(dofs, dofmap.nodes3[nodes], cond.value, scale)
            else:
                nodes = boundary_vertices_on_side(mesh, side)
                add(offsets[f"p{network}"] + nodes, mesh.vertices[nodes], cond.value, 1.0)
    pin_dofs = []
    for pin in pins:
        dof = offsets[f"p{pin.network}"] + pin.vertex
        if dof in chosen:
            continue
        value = float(pin.value)
        add(np.array([dof]), mesh.vertices[[pin.vertex]], lambda x, y, t, v=value: np.full(np.shape(x), v), 1.0)
        pin_dofs.append(dof)
    dofs = np.array(list(chosen), dtype=np.int64)
    return Constraints(dofs, groups, tuple(pin_dofs))


def _scatter(rows, cols, local, shape):
    """Sum element matrices ``local[t, a, b]`` into a sparse matrix."""
    nt, na, nb = local.shape
    r = np.broadcast_to(rows[:, :, None], (nt, na, nb)).ravel()
    c = np.broadcast_to(cols[:, None, :], (nt, na, nb)).ravel()
    return sp.csr_matrix((local.ravel(), (r, c)), shape=shape)


@dataclass(eq=False)
class SystemMatrices:
    mesh: TriangleMesh
    dofmap: MixedDofMap
    params: MediumParameters
    bcs: BoundaryConditionSpec
    tables: ElementTables
    mass: sp.csr_matrix
    stiffness: sp.csr_matrix
    blocks: dict
    constraints: Constraints
    load3: sp.csr_matrix
    load1: sp.csr_matrix

    @property
    def size(self) -> int:
        return self.dofmap.size

    def free_mask(self) -> np.ndarray:
        mask = np.ones(self.size, dtype=bool)
        mask[self.constraints.dofs] = False
        return mask


def assemble_time_invariant(
    mesh: TriangleMesh,
    params: MediumParameters,
    bcs: BoundaryConditionSpec | None = None,
    *,
    dofmap: MixedDofMap | None = None,
    pins: Sequence[Pin] | None = None,
    quadrature_degree: int = DEFAULT_QUADRATURE_DEGREE,
) -> SystemMatrices:
    problems = validate_parameters(params)
    if problems:
        raise ValueError("invalid medium parameters: " + "; ".join(problems))
    bcs = bcs or no_flow_boundary()
    dofmap = dofmap or build_mixed_dof_map(mesh)
    if dofmap.n1 != mesh.n_vertices or dofmap.cell_dofs3.shape[0] != mesh.n_triangles:
        raise ValueError("dof map does not belong to this mesh")
    tables = ElementTables.build(mesh, quadrature_degree)
    W, N3, N1 = tables.weights, tables.n3, tables.n1
    d3, d1 = dofmap.cell_dofs3, dofmap.cell_dofs1
    n3, n1 = dofmap.n3, dofmap.n1

    m3 = _scatter(d3, d3, np.einsum("tq,qa,qb->tab", W, N3, N3), (n3, n3))
    m1 = _scatter(d1, d1, np.einsum("tq,qa,qb->tab", W, N1, N1), (n1, n1))
    # grad of P1 is constant per element
    gx = [
        _scatter(d3, d1, np.einsum("tq,qa,tb->tab", W, N3, tables.grad1[:, :, k]), (n3, n1))
        for k in range(2)
    ]
    dv = [
        _scatter(d1, d3, np.einsum("tq,qb,tqa->tba", W, N1, tables.grad3[..., k]), (n1, n3))
        for k in range(2)
    ]

    blocks = {}
    mass_blocks = {}
    k = params.beta / params.mu
    for net in (1, 2):
        phi, rho, drag = params.phi(net), params.rho(net), params.drag(net)
        comps = (f"v{net}x", f"v{net}y")
        for a, ca in enumerate(comps):
            mass_blocks[ca, ca] = rho * m3
            for b, cb in enumerate(comps):
                if drag[a, b] != 0:
                    blocks[ca, cb] = phi**2 * drag[a, b] * m3
            blocks[ca, f"p{net}"] = phi * gx[a]
            blocks[f"p{net}", ca] = phi * dv[a]
    if k != 0:
        blocks["p1", "p1"] = k * m1
        blocks["p1", "p2"] = -k * m1
        blocks["p2", "p1"] = -k * m1
        blocks["p2", "p2"] = k * m1

    def compose(parts):
        grid = [[parts.get((r, c)) for c in FIELDS] for r in FIELDS]
        sizes = [dofmap.count(f) for f in FIELDS]
        for i, r in enumerate(FIELDS):
            if all(g is None for g in grid[i]):
                grid[i][i] = sp.csr_matrix((sizes[i], sizes[i]))
        return sp.bmat(grid, format="csr")

    mass = compose(mass_blocks)
    stiffness = compose(blocks)

    nt, nq = W.shape
    cols = np.arange(nt * nq).reshape(nt, nq)
    load3 = _scatter(d3, cols, np.einsum("tq,qa->taq", W, N3), (n3, nt * nq))
    load1 = _scatter(d1, cols, np.einsum("tq,qa->taq", W, N1), (n1, nt * nq))

    if pins is None:
        pins = default_pins(mesh, params, bcs)
    constraints = build_constraints(mesh, dofmap, bcs, pins)
    return SystemMatrices(
        mesh, dofmap, params, bcs, tables, mass, stiffness, blocks, constraints, load3, load1
    )


class RhsAssembler:
    """``F(t)``: body-force loads on velocity rows, mass sources on pressure rows.

    ``body_force`` is either a :class:`BodyForceSpec` (shared by both
    networks) or a pair ``(b1, b2)`` of ``(bx, by)`` evaluators.
    """

    def __init__(self, matrices: SystemMatrices, body_force, g1=None, g2=None):
        self.m = matrices
        if isinstance(body_force, BodyForceSpec):
            pair = (body_force.bx, body_force.by)
            self.forces = (pair, pair)
        else:
            self.forces = tuple(tuple(b) for b in body_force)
        self.sources = (g1, g2)
        pts = matrices.tables.points
        self._x = pts[..., 0].ravel()
        self._y = pts[..., 1].ravel()

    def __call__(self, t: float) -> np.ndarray:
        m = self.m
        dm = m.dofmap
        out = np.zeros(dm.size)
        cache = {}
        for net, (bx, by) in zip((1, 2), self.forces):
            rho = m.params.rho(net)
            for comp, fn in (("x", bx), ("y", by)):
                key = id(fn)
                if key not in cache:
                    cache[key] = m.load3 @ _evaluate(fn, self._x, self._y, t)
                out[dm.field_slice(f"v{net}{comp}")] = rho * cache[key]
        for net, g in zip((1, 2), self.sources):
            if g is not None:
                out[dm.field_slice(f"p{net}")] = m.load1 @ _evaluate(g, self._x, self._y, t)
        return out


def apply_constraints(matrix, rhs, constraints: Constraints, t: float):
    """Symmetric elimination: identity rows/columns, prescribed values lifted into the rhs."""
    matrix = sp.csr_matrix(matrix)
    n = matrix.shape[0]
    cdofs = constraints.dofs
    g = constraints.values(t)
    free = np.ones(n)
    free[cdofs] = 0.0
    keep = sp.diags(free)
    lifted = np.asarray(rhs, dtype=float) - matrix[:, cdofs] @ g
    out_rhs = free * lifted
    out_rhs[cdofs] = g
    out_matrix = (keep @ matrix @ keep + sp.diags(1.0 - free)).tocsc()
    return out_matrix, out_rhs


class Factorization:
    """Sparse LU of a constrained matrix, reusable across right-hand sides."""

    def __init__(self, lu):
        self.lu = lu
        self.shape = lu.shape

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return self.lu.solve(rhs)


def factorize(matrix) -> Factorization:
    matrix = sp.csc_matrix(matrix)
    try:
        lu = spla.splu(matrix)
    except RuntimeError as exc:
        raise SingularSystemError(f"factorization failed: {exc}") from exc
    pivots = np.abs(lu.U.diagonal())
    worst = int(np.argmin(pivots))
    if pivots[worst] <= SINGULAR_PIVOT_RTOL * pivots.max():
        dof = int(lu.perm_c[worst])
        raise SingularSystemError(
            f"matrix is numerically singular: pivot {pivots[worst]:.3e} at unknown {dof}", dof
        )
    return Factorization(lu)


class ConstrainedOperator:
    """A constrained, factorized operator ``K`` with cached lifting columns."""

    def __init__(self, matrix, constraints: Constraints):
        self.constraints = constraints
        matrix = sp.csr_matrix(matrix)
        n = matrix.shape[0]
        self.free = np.ones(n)
        self.free[constraints.dofs] = 0.0
        self.lift = matrix[:, constraints.dofs].tocsr()
        self.matrix, _ = apply_constraints(matrix, np.zeros(n), constraints, 0.0)
        self.factorization = factorize(self.matrix)

    def solve(self, rhs: np.ndarray, t: float) -> np.ndarray:
        g = self.constraints.values(t)
        b = self.free * (rhs - self.lift @ g)
        b[self.constraints.dofs] = g
        return self.factorization.solve(b)


def backward_euler_operator(matrices: SystemMatrices, dt: float) -> ConstrainedOperator:
    return ConstrainedOperator(matrices.mass / dt + matrices.stiffness, matrices.constraints)


def backward_euler_step(
    operator: ConstrainedOperator,
    matrices: SystemMatrices,
    state: TransientState,
    rhs_provider: Callable[[float], np.ndarray],
    dt: float,
) -> TransientState:
    """Solve ``(M/dt + A) x1 = (M/dt) x0 + F(t + dt)``; pressures of x0 drop out with M."""
    t1 = state.time + dt
    rhs = matrices.mass @ state.coefficients / dt + rhs_provider(t1)
    return TransientState(t1, operator.solve(rhs, t1))


def solve_steady(matrices: SystemMatrices, rhs_provider, t: float = 0.0) -> TransientState:
    operator = ConstrainedOperator(matrices.stiffness, matrices.constraints)
    return TransientState(t, operator.solve(rhs_provider(t), t))


def consistent_initialize(
    matrices: SystemMatrices,
    ics: InitialConditionSpec,
    rhs_provider: Callable[[float], np.ndarray] | None = None,
) -> TransientState:
    """State at t = 0 from the velocity initial condition.

    Velocities are nodal interpolants of ``u0 / phi`` with the essential
    values imposed.  Pressures carry no history in the time stepping and
    only feed t = 0 diagnostics: their difference ``p1 - p2`` is the
    least-squares solution of the two mass balances with the velocities
    held fixed, their mean is a constant set by the pin (zero mean when
    there is none).  Prescribed pressure values overwrite the result.
    """
    m = matrices
    dm, params = m.dofmap, m.params
    x = np.zeros(dm.size)
    for net in (1, 2):
        ux, uy = ics.darcy(net)
        phi = params.phi(net)
        x[dm.field_slice(f"v{net}x")] = interpolate_field(m.mesh, dm, f"v{net}x", ux) / phi
        x[dm.field_slice(f"v{net}y")] = interpolate_field(m.mesh, dm, f"v{net}y", uy) / phi
    cons = m.constraints
    x[cons.dofs] = cons.values(0.0)

    nv = dm.n_velocity
    forcing = rhs_provider(0.0)[nv:] if rhs_provider is not None else np.zeros(2 * dm.n1)
    residual = forcing - m.stiffness[nv:, :nv] @ x[:nv]
    r1, r2 = residual[: dm.n1], residual[dm.n1 :]
    k = params.beta / params.mu
    diff = np.zeros(dm.n1)
    if k > 0:
        m1 = m.blocks["p1", "p1"] / k
        diff = spla.spsolve(m1.tocsc(), 0.5 * (r1 - r2)) / k
    mean = 0.0
    off = dm.offsets
    if cons.pin_dofs:
        dof = cons.pin_dofs[0]
        value = cons.values(0.0)[list(cons.dofs).index(dof)]
        vertex = dof - off["p1"] if dof < off["p2"] else dof - off["p2"]
        sign = 0.5 if dof < off["p2"] else -0.5
        mean = value - sign * diff[vertex]
    x[dm.field_slice("p1")] = mean + 0.5 * diff
    x[dm.field_slice("p2")] = mean - 0.5 * diff
    x[cons.dofs] = cons.values(0.0)
    return TransientState(0.0, x)


def time_levels(dt: float, t_end: float) -> np.ndarray:
    """Times ``dt, 2 dt, ...`` with the last step clipped to land on ``t_end``."""
    n_full = int(math.floor(t_end / dt + 1e-9))
    times = [n * dt for n in range(1, n_full + 1)]
    if times and abs(times[-1] - t_end) <= 1e-9 * max(1.0, t_end):
        times[-1] = t_end
    elif not times or times[-1] < t_end:
        times.append(t_end)
    return np.array(times)


@dataclass
class RunResult:
    final_state: TransientState
    steps: int
    observers: list


def run_transient(
    config: SolverConfig,
    matrices: SystemMatrices,
    initial_state: TransientState,
    rhs_provider: Callable[[float], np.ndarray],
    observers: Sequence[Callable[[int, TransientState], None]] = (),
) -> RunResult:
    """March from the initial state to ``config.t_end``.

    Each observer is called as ``observer(step, state)`` for step 0 (the
    initial state) and after every time step.  One factorization per
    distinct step size is built and reused.
    """
    operators: dict[float, ConstrainedOperator] = {}
    state = initial_state
    for obs in observers:
        obs(0, state)
    times = time_levels(config.dt, config.t_end)
    for n, t1 in enumerate(times, start=1):
        dt = float(t1 - state.time)
        key = round(dt, 12)
        try:
            if key not in operators:
                operators[key] = backward_euler_operator(matrices, dt)
            state = backward_euler_step(operators[key], matrices, state, rhs_provider, dt)
        except Exception as exc:
            raise StepFailure(n, exc) from exc
        # land exactly on the scheduled time
        state = TransientState(float(t1), state.coefficients)
        if not np.all(np.isfinite(state.coefficients)):
            raise StepFailure(n, FloatingPointError("non-finite solution"))
        for obs in observers:
            obs(n, state)
    return RunResult(state, len(times), list(observers))
