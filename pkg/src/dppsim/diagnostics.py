"""Norms, forcing bounds, dissipation and growth-bound checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .fem import DEFAULT_QUADRATURE_DEGREE, ElementTables, MixedDofMap, integrate_scalar
from .mesh import TriangleMesh
from .model import BodyForceSpec, MediumParameters, eval_body_force

AMPLITUDE_BOUND = "amplitude-bound"
SAMPLED = "sampled"
FMAX_MODES = (AMPLITUDE_BOUND, SAMPLED)


def _tables(mesh, tables, degree=DEFAULT_QUADRATURE_DEGREE):
    return tables if tables is not None else ElementTables.build(mesh, degree)


def _coeffs(state):
    return getattr(state, "coefficients", state)


def _velocity_squares(mesh, dofmap, state, tables):
    """Pointwise |v1|^2 and |v2|^2 at the quadrature points."""
    x = _coeffs(state)
    out = []
    for net in (1, 2):
        vx = tables.values3(dofmap.cell_dofs3, x[dofmap.field_slice(f"v{net}x")])
        vy = tables.values3(dofmap.cell_dofs3, x[dofmap.field_slice(f"v{net}y")])
        out.append(vx * vx + vy * vy)
    return out


def v_norm(mesh: TriangleMesh, dofmap: MixedDofMap, params: MediumParameters, state, *, tables=None) -> float:
    """Density-weighted L2 norm of the stacked velocities."""
    tables = _tables(mesh, tables)
    s1, s2 = _velocity_squares(mesh, dofmap, state, tables)
    return math.sqrt(max(tables.integrate(params.rho1 * s1 + params.rho2 * s2), 0.0))


def l2_norm(mesh: TriangleMesh, dofmap: MixedDofMap, state, *, tables=None) -> float:
    tables = _tables(mesh, tables)
    s1, s2 = _velocity_squares(mesh, dofmap, state, tables)
    return math.sqrt(max(tables.integrate(s1 + s2), 0.0))


def f_norm_at(mesh, params: MediumParameters, body_force: BodyForceSpec, t: float,
              degree: int = DEFAULT_QUADRATURE_DEGREE) -> float:
    """Norm of the stacked forcing ``(b, b)`` in the density-weighted inner product."""
    def integrand(x, y):
        bx, by = eval_body_force(body_force, x, y, t)
        return (params.rho1 + params.rho2) * (bx * bx + by * by)

    return math.sqrt(integrate_scalar(mesh, integrand, degree))


def compute_f_max(mesh, params: MediumParameters, body_force: BodyForceSpec, t_end: float,
                  mode: str = AMPLITUDE_BOUND, samples: int = 2001) -> float:
    """Upper bound of the forcing norm over ``[0, t_end]``.

    ``amplitude-bound`` uses the declared component amplitudes, which bound
    ``|b|`` pointwise; ``sampled`` maximises :func:`f_norm_at` over a
    uniform time grid and is never larger.
    """
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    if mode == AMPLITUDE_BOUND:
        if body_force.amplitude_bounds is None:
            raise ValueError("amplitude-bound mode needs declared amplitude bounds for bx and by")
        bx, by = body_force.amplitude_bounds
        area = float(mesh.signed_areas().sum())
        return math.sqrt((params.rho1 + params.rho2) * area * (bx * bx + by * by))
    if mode == SAMPLED:
        return max(f_norm_at(mesh, params, body_force, float(t)) for t in np.linspace(0.0, t_end, samples))
    raise ValueError(f"unknown f_max mode {mode!r}; expected one of {FMAX_MODES}")


def _pressures_at_qp(dofmap, state, tables):
    x = _coeffs(state)
    p1 = tables.values1(dofmap.cell_dofs1, x[dofmap.field_slice("p1")])
    p2 = tables.values1(dofmap.cell_dofs1, x[dofmap.field_slice("p2")])
    return p1, p2


def dissipation_rate(mesh, dofmap: MixedDofMap, params: MediumParameters, state, *, tables=None) -> float:
    """Drag work plus transfer loss; the kinetic energy decays at this rate when unforced."""
    tables = _tables(mesh, tables)
    x = _coeffs(state)
    total = np.zeros_like(tables.weights)
    for net in (1, 2):
        vx = tables.values3(dofmap.cell_dofs3, x[dofmap.field_slice(f"v{net}x")])
        vy = tables.values3(dofmap.cell_dofs3, x[dofmap.field_slice(f"v{net}y")])
        d = params.phi(net) ** 2 * params.drag(net)
        total += d[0, 0] * vx * vx + (d[0, 1] + d[1, 0]) * vx * vy + d[1, 1] * vy * vy
    p1, p2 = _pressures_at_qp(dofmap, state, tables)
    total += (params.beta / params.mu) * (p1 - p2) ** 2
    return tables.integrate(total)


def p_diff_integral(mesh, dofmap: MixedDofMap, state, *, tables=None) -> float:
    tables = _tables(mesh, tables)
    p1, p2 = _pressures_at_qp(dofmap, state, tables)
    return tables.integrate(p1 - p2)


def transfer_integral(mesh, dofmap: MixedDofMap, params: MediumParameters, state, *, tables=None) -> float:
    """Integral of the micro-to-macro transfer rate ``-(beta/mu)(p1 - p2)``."""
    return -(params.beta / params.mu) * p_diff_integral(mesh, dofmap, state, tables=tables)


def transfer_field(dofmap: MixedDofMap, params: MediumParameters, state) -> np.ndarray:
    """Transfer rate at the mesh vertices (exact for P1 pressures)."""
    x = _coeffs(state)
    return -(params.beta / params.mu) * (x[dofmap.field_slice("p1")] - x[dofmap.field_slice("p2")])


@dataclass
class NormSeries:
    steps: list = field(default_factory=list)
    times: list = field(default_factory=list)
    norm_v: list = field(default_factory=list)
    norm_l2: list = field(default_factory=list)
    dissipation: list = field(default_factory=list)
    p_diff: list = field(default_factory=list)
    transfer: list = field(default_factory=list)

    def __len__(self):
        return len(self.times)

    def append(self, step, time, norm_v, norm_l2=math.nan, dissipation=math.nan, p_diff=math.nan, transfer=math.nan):
        if self.times and not time > self.times[-1]:
            raise ValueError(f"times must increase strictly ({time} after {self.times[-1]})")
        self.steps.append(int(step))
        self.times.append(float(time))
        self.norm_v.append(float(norm_v))
        self.norm_l2.append(float(norm_l2))
        self.dissipation.append(float(dissipation))
        self.p_diff.append(float(p_diff))
        self.transfer.append(float(transfer))

    @classmethod
    def from_pairs(cls, pairs):
        series = cls()
        for i, (t, norm) in enumerate(pairs):
            series.append(i, t, norm)
        return series

    def kinetic_energy(self) -> np.ndarray:
        return 0.5 * np.asarray(self.norm_v) ** 2


class NormRecorder:
    """Observer that appends diagnostics for every ``record_every``-th step."""

    def __init__(self, matrices, record_every: int = 1):
        self.m = matrices
        self.record_every = int(record_every)
        self.series = NormSeries()

    def __call__(self, step: int, state) -> None:
        if step % self.record_every:
            return
        m = self.m
        tables = m.tables
        pd = p_diff_integral(m.mesh, m.dofmap, state, tables=tables)
        self.series.append(
            step,
            state.time,
            v_norm(m.mesh, m.dofmap, m.params, state, tables=tables),
            l2_norm(m.mesh, m.dofmap, state, tables=tables),
            dissipation_rate(m.mesh, m.dofmap, m.params, state, tables=tables),
            pd,
            -(m.params.beta / m.params.mu) * pd,
        )


@dataclass
class BoundReport:
    f_max: float
    intercept: float
    mode: str
    tolerance: float
    steps: list
    times: list
    norms: list
    bounds: list
    margins: list
    passed: bool
    first_violation: int | None

    def to_dict(self) -> dict:
        return {
            "f_max": self.f_max,
            "intercept": self.intercept,
            "mode": self.mode,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "first_violation": self.first_violation,
            "records": len(self.times),
            "min_margin": min(self.margins) if self.margins else None,
        }


def check_growth_bound(series, f_max: float, c: float, *, mode: str = AMPLITUDE_BOUND,
                       tolerance: float = 0.0) -> BoundReport:
    """Compare ``||v||_V`` with ``t f_max + c`` at every record; exact by default."""
    if not isinstance(series, NormSeries):
        series = NormSeries.from_pairs(series)
    if len(series) == 0:
        raise ValueError("empty norm series")
    bounds = [t * f_max + c for t in series.times]
    margins = [b - n for b, n in zip(bounds, series.norm_v)]
    first = next((s for s, m in zip(series.steps, margins) if not m >= -tolerance), None)
    return BoundReport(
        f_max=float(f_max),
        intercept=float(c),
        mode=mode,
        tolerance=float(tolerance),
        steps=list(series.steps),
        times=list(series.times),
        norms=list(series.norm_v),
        bounds=bounds,
        margins=margins,
        passed=first is None,
        first_violation=first,
    )


def dissipation_slack(series: NormSeries) -> np.ndarray:
    """Per step ``-D[n+1] - (E[n+1] - E[n]) / dt``; non-negative when the energy inequality holds."""
    e = series.kinetic_energy()
    t = np.asarray(series.times)
    d = np.asarray(series.dissipation)
    return -d[1:] - np.diff(e) / np.diff(t)


def relative_increases(series: NormSeries) -> np.ndarray:
    """``(|v|[n+1] - |v|[n]) / |v|[n]`` per step (zero where the norm vanishes)."""
    n = np.asarray(series.norm_v)
    prev = n[:-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(prev > 0, np.diff(n) / prev, np.diff(n))
    return rel
