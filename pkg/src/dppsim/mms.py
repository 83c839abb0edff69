"""Method of manufactured solutions for the coupled two-network system.

Sources are obtained symbolically: the body force of each network absorbs
the momentum residual and the mass sources ``g1``, ``g2`` absorb the mass
balance residual of the chosen fields.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import sympy as sy

from .fem import ElementTables
from .mesh import OUTWARD_NORMALS, generate_unit_square_mesh
from .model import SIDES, BoundaryConditionSpec, MediumParameters, SideCondition, reference_parameters
from .system import (
    Pin,
    RhsAssembler,
    assemble_time_invariant,
    solve_steady,
)

X, Y, T = sy.symbols("x y t")
MMS_FIELDS = ("v1x", "v1y", "v2x", "v2y", "p1", "p2")


def _lambdify(expr):
    fn = sy.lambdify((X, Y, T), expr, "numpy")
    return lambda x, y, t: np.broadcast_to(np.asarray(fn(x, y, t), dtype=float), np.shape(x))


@dataclass
class ManufacturedSolution:
    """Steady fields given as sympy expressions (or strings) in x and y."""

    name: str
    fields: dict
    velocity_order: float = 2.0
    pressure_order: float = 1.5

    def __post_init__(self):
        self.fields = {k: sy.sympify(self.fields[k], locals={"x": X, "y": Y}) for k in MMS_FIELDS}

    def sources(self, params: MediumParameters):
        f = self.fields
        k = sy.nsimplify(params.beta) / sy.nsimplify(params.mu)
        forces = []
        for net in (1, 2):
            phi, rho = params.phi(net), params.rho(net)
            drag = params.drag(net)
            vx, vy, p = f[f"v{net}x"], f[f"v{net}y"], f[f"p{net}"]
            bx = (sy.diff(vx, T) * rho + phi**2 * (drag[0, 0] * vx + drag[0, 1] * vy) + phi * sy.diff(p, X)) / rho
            by = (sy.diff(vy, T) * rho + phi**2 * (drag[1, 0] * vx + drag[1, 1] * vy) + phi * sy.diff(p, Y)) / rho
            forces.append((_lambdify(bx), _lambdify(by)))
        div1 = params.phi1 * (sy.diff(f["v1x"], X) + sy.diff(f["v1y"], Y))
        div2 = params.phi2 * (sy.diff(f["v2x"], X) + sy.diff(f["v2y"], Y))
        jump = f["p1"] - f["p2"]
        g1 = _lambdify(div1 + k * jump)
        g2 = _lambdify(div2 - k * jump)
        return forces, g1, g2

    def exact(self, name):
        return _lambdify(self.fields[name])


def manufactured_boundary(solution: ManufacturedSolution, pressure_sides: dict | None = None) -> BoundaryConditionSpec:
    """Velocity data from the exact fields, except on ``pressure_sides[network]``."""
    pressure_sides = pressure_sides or {}

    nets = {}
    for net in (1, 2):
        sides = {}
        for side in SIDES:
            if side in pressure_sides.get(net, ()):
                sides[side] = SideCondition("pressure", solution.exact(f"p{net}"))
            else:
                nx_, ny_ = OUTWARD_NORMALS[side]
                vn = nx_ * solution.fields[f"v{net}x"] + ny_ * solution.fields[f"v{net}y"]
                sides[side] = SideCondition("velocity", _lambdify(vn))
        nets[net] = sides
    return BoundaryConditionSpec(nets[1], nets[2])


def polynomial_solution() -> ManufacturedSolution:
    """Cubic velocities and linear pressures; reproduced exactly by P3-P1."""
    return ManufacturedSolution(
        "polynomial",
        {
            "v1x": "x**3 + x*y**2 - 2*y",
            "v1y": "y**3 - x**2*y + 1",
            "v2x": "x**2*y + 0.5*x",
            "v2y": "x*y**2 - y**3 + x",
            "p1": "2*x - y + 1",
            "p2": "x + 3*y - 0.5",
        },
    )


def trigonometric_solution() -> ManufacturedSolution:
    return ManufacturedSolution(
        "trigonometric",
        {
            "v1x": "sin(pi*x)*cos(pi*y) + y**2",
            "v1y": "cos(pi*x)*sin(2*pi*y)",
            "v2x": "exp(x)*sin(pi*y)",
            "v2y": "x*y*cos(pi*x)",
            "p1": "cos(pi*x)*cos(pi*y)",
            "p2": "sin(pi*x)*sin(pi*y) + x",
        },
    )


@dataclass
class ConvergenceReport:
    name: str
    levels: list
    h: list
    errors: dict = field(default_factory=dict)
    orders: dict = field(default_factory=dict)

    def velocity_errors(self):
        return [math.hypot(a, b) for a, b in zip(self.errors["v1"], self.errors["v2"])]

    def min_order(self, group: str) -> float:
        keys = ("v1", "v2") if group == "velocity" else ("p1", "p2")
        return min(min(self.orders[k]) for k in keys)

    def strictly_decreasing(self) -> bool:
        return all(all(b < a for a, b in zip(e, e[1:])) for e in self.errors.values())

    def to_dict(self) -> dict:
        return {"name": self.name, "levels": self.levels, "h": self.h, "errors": self.errors, "orders": self.orders}


def solve_manufactured(solution: ManufacturedSolution, n: int, params: MediumParameters | None = None,
                       pressure_sides: dict | None = None, quadrature_degree: int = 8):
    """Steady solve on an ``n x n`` mesh; returns (matrices, state)."""
    params = params or reference_parameters()
    mesh = generate_unit_square_mesh(n, n)
    bcs = manufactured_boundary(solution, pressure_sides)
    pins = None
    if not any(bcs.pressure_sides(net) for net in (1, 2)):
        origin = int(np.argmin(np.hypot(*mesh.vertices.T)))
        x0, y0 = mesh.vertices[origin]
        pins = [Pin(1, origin, float(solution.exact("p1")(x0, y0, 0.0)))]
        if params.beta == 0:
            pins.append(Pin(2, origin, float(solution.exact("p2")(x0, y0, 0.0))))
    matrices = assemble_time_invariant(mesh, params, bcs, pins=pins, quadrature_degree=quadrature_degree)
    forces, g1, g2 = solution.sources(params)
    rhs = RhsAssembler(matrices, forces, g1, g2)
    return matrices, solve_steady(matrices, rhs, 0.0)


def field_errors(solution: ManufacturedSolution, matrices, state, degree: int = 10) -> dict:
    """L2 errors of v1, v2 (vector) and p1, p2 against the exact fields."""
    mesh, dm = matrices.mesh, matrices.dofmap
    tables = ElementTables.build(mesh, degree)
    x, y = tables.points[..., 0], tables.points[..., 1]
    coeffs = state.coefficients
    sq = {}
    for name in MMS_FIELDS:
        c = coeffs[dm.field_slice(name)]
        if name.startswith("v"):
            approx = tables.values3(dm.cell_dofs3, c)
        else:
            approx = tables.values1(dm.cell_dofs1, c)
        sq[name] = tables.integrate((approx - solution.exact(name)(x, y, 0.0)) ** 2)
    return {
        "v1": math.sqrt(sq["v1x"] + sq["v1y"]),
        "v2": math.sqrt(sq["v2x"] + sq["v2y"]),
        "p1": math.sqrt(sq["p1"]),
        "p2": math.sqrt(sq["p2"]),
    }


def mms_study(solution: ManufacturedSolution, levels=(4, 8, 16, 32), params: MediumParameters | None = None,
              pressure_sides: dict | None = None) -> ConvergenceReport:
    levels = list(levels)
    if len(levels) < 3:
        raise ValueError("a convergence study needs at least 3 refinement levels")
    report = ConvergenceReport(solution.name, levels, [1.0 / n for n in levels])
    for n in levels:
        matrices, state = solve_manufactured(solution, n, params, pressure_sides)
        for key, err in field_errors(solution, matrices, state).items():
            report.errors.setdefault(key, []).append(err)
    for key, errs in report.errors.items():
        report.orders[key] = [
            math.log(e0 / e1) / math.log(h0 / h1) if e0 > 0 and e1 > 0 else math.nan
            for e0, e1, h0, h1 in zip(errs, errs[1:], report.h, report.h[1:])
        ]
    return report
