"""Drive a configured simulation and emit its artifacts."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..diagnostics import BoundReport, NormRecorder, NormSeries, check_growth_bound, compute_f_max, v_norm
from ..mesh import export_mesh
from ..mms import ConvergenceReport, mms_study, trigonometric_solution, polynomial_solution, field_errors, solve_manufactured
from ..system import RhsAssembler, assemble_time_invariant, consistent_initialize, run_transient
from .config import RunConfig
from .output import (
    write_mesh_svg,
    write_norm_csv,
    write_report_json,
    write_svg_plot,
    write_transfer_csv,
    write_vtk,
)

log = logging.getLogger("dppsim")

# network 2 takes its pressure on the right and top sides in the trigonometric study
MMS_PRESSURE_SIDES = {2: ("right", "top")}
MMS_VELOCITY_ORDER = 2.0
MMS_PRESSURE_ORDER = 1.5
MMS_POLY_TOL = 1e-10


@dataclass
class RunOutcome:
    series: NormSeries
    report: BoundReport
    f_max: float
    intercept: float
    final_state: object
    matrices: object
    files: list = field(default_factory=list)
    snapshots: dict = field(default_factory=dict)  # step -> transfer field at the vertices


class _FieldExporter:
    """Observer writing VTK and transfer CSV every ``every`` steps (and at step 0)."""

    def __init__(self, matrices, out_dir: Path | None, every: int, name: str):
        self.m = matrices
        self.out_dir = out_dir
        self.every = every
        self.name = name
        self.files: list[Path] = []
        self.snapshots: dict[int, np.ndarray] = {}

    def __call__(self, step, state):
        if self.every <= 0 or step % self.every:
            return
        m = self.m
        p = state.coefficients
        self.snapshots[step] = -(m.params.beta / m.params.mu) * (
            p[m.dofmap.field_slice("p1")] - p[m.dofmap.field_slice("p2")]
        )
        if self.out_dir is None:
            return
        vtk = self.out_dir / f"{self.name}_{step:06d}.vtk"
        vtk.write_text(write_vtk(m.mesh, m.dofmap, state, m.params, title=f"{self.name} t={state.time:.6g}"))
        csv = self.out_dir / f"transfer_{step:06d}.csv"
        csv.write_text(write_transfer_csv(m.mesh, m.dofmap, state, m.params))
        self.files += [vtk, csv]


def run_simulation(cfg: RunConfig, out_dir: str | Path | None = None) -> RunOutcome:
    """Run ``cfg``; with ``out_dir`` set, write norms.csv, bound_report.json, norm.svg, mesh and field files."""
    mesh = cfg.build_mesh()
    params = cfg.parameters()
    body_force = cfg.body_force_spec()
    solver = cfg.solver_config()
    matrices = assemble_time_invariant(mesh, params, cfg.boundary_spec(), quadrature_degree=solver.quadrature_degree)
    rhs = RhsAssembler(matrices, body_force)
    state0 = consistent_initialize(matrices, cfg.initial_spec(), rhs)

    intercept = v_norm(mesh, matrices.dofmap, params, state0, tables=matrices.tables)
    f_max = compute_f_max(mesh, params, body_force, solver.t_end, cfg.diagnostics.fmax_mode, cfg.diagnostics.fmax_samples)
    log.info("%s: %d dofs, f_max=%.9g (%s), c=%.9g", cfg.name, matrices.dofmap.size, f_max,
             cfg.diagnostics.fmax_mode, intercept)

    path = Path(out_dir) if out_dir is not None else None
    if path is not None:
        path.mkdir(parents=True, exist_ok=True)
    recorder = NormRecorder(matrices, cfg.diagnostics.record_every)
    exporter = _FieldExporter(matrices, path, cfg.output.vtk_every, cfg.name)
    result = run_transient(solver, matrices, state0, rhs, [recorder, exporter])
    series = recorder.series
    if series.steps[-1] != result.steps:
        # the final state is always recorded
        recorder.record_every = 1
        recorder(result.steps, result.final_state)

    report = check_growth_bound(series, f_max, intercept, mode=cfg.diagnostics.fmax_mode,
                                tolerance=cfg.diagnostics.bound_tolerance)
    outcome = RunOutcome(series, report, f_max, intercept, result.final_state, matrices,
                         list(exporter.files), exporter.snapshots)
    if path is not None:
        extra = {
            "name": cfg.name,
            "steps": result.steps,
            "dt": solver.dt,
            "t_end": solver.t_end,
            "dofs": matrices.dofmap.size,
            "final_norm_V": series.norm_v[-1],
            "transfer_snapshots": _snapshot_summary(exporter.snapshots),
        }
        files = {
            "norms.csv": write_norm_csv(series, report),
            "bound_report.json": write_report_json(report, extra),
            "norm.svg": write_svg_plot(series, report, title=cfg.name),
            "mesh.dppmesh": export_mesh(mesh),
            "mesh.svg": write_mesh_svg(mesh),
        }
        for fname, text in files.items():
            (path / fname).write_text(text)
            outcome.files.append(path / fname)
    return outcome


def _snapshot_summary(snapshots: dict) -> dict:
    out = {}
    for step, values in sorted(snapshots.items()):
        finite = bool(np.all(np.isfinite(values)))
        out[str(step)] = {
            "min": float(values.min()) if finite else math.nan,
            "max": float(values.max()) if finite else math.nan,
            "finite": finite,
        }
    return out


@dataclass
class MmsOutcome:
    polynomial_errors: list
    trig: ConvergenceReport
    passed: bool
    failures: list

    def to_dict(self) -> dict:
        return {
            "polynomial_max_errors": self.polynomial_errors,
            "trigonometric": self.trig.to_dict(),
            "thresholds": {"velocity_order": MMS_VELOCITY_ORDER, "pressure_order": MMS_PRESSURE_ORDER,
                           "polynomial_tolerance": MMS_POLY_TOL},
            "passed": self.passed,
            "failures": self.failures,
        }


def run_mms(levels=(4, 8, 16, 32), pressure_sides=MMS_PRESSURE_SIDES) -> MmsOutcome:
    """Polynomial reproduction plus the trigonometric convergence study, checked against the thresholds."""
    poly = polynomial_solution()
    poly_errors = []
    for n in levels:
        matrices, state = solve_manufactured(poly, n)
        poly_errors.append(max(field_errors(poly, matrices, state).values()))
    trig = mms_study(trigonometric_solution(), levels, pressure_sides=pressure_sides)
    failures = []
    for n, err in zip(levels, poly_errors):
        if not err <= MMS_POLY_TOL:
            failures.append(f"polynomial error {err:.3e} on the {n}x{n} mesh exceeds {MMS_POLY_TOL:g}")
    if not trig.strictly_decreasing():
        failures.append("trigonometric errors do not decrease strictly")
    v_order, p_order = trig.min_order("velocity"), trig.min_order("pressure")
    if not v_order >= MMS_VELOCITY_ORDER:
        failures.append(f"velocity order {v_order:.3f} below {MMS_VELOCITY_ORDER}")
    if not p_order >= MMS_PRESSURE_ORDER:
        failures.append(f"pressure order {p_order:.3f} below {MMS_PRESSURE_ORDER}")
    return MmsOutcome(poly_errors, trig, not failures, failures)
