"""Text emitters: norm CSV, legacy VTK, SVG plots and reports."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from ..diagnostics import BoundReport, NormSeries, check_growth_bound, transfer_field
from ..fem import MixedDofMap

CSV_HEADER = ("step", "time", "norm_V", "norm_L2", "bound", "margin", "dissipation_rate", "p_diff_integral")


def _g(value: float) -> str:
    return f"{value:.9g}"


def write_norm_csv(series: NormSeries, report: BoundReport) -> str:
    if len(series) == 0:
        raise ValueError("empty norm series")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for i in range(len(series)):
        writer.writerow(
            [
                series.steps[i],
                _g(series.times[i]),
                _g(series.norm_v[i]),
                _g(series.norm_l2[i]),
                _g(report.bounds[i]),
                _g(report.margins[i]),
                _g(series.dissipation[i]),
                _g(series.p_diff[i]),
            ]
        )
    return buf.getvalue()


def read_norm_csv(text: str) -> NormSeries:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(header) != CSV_HEADER:
        raise ValueError(f"CSV header must be {','.join(CSV_HEADER)}")
    series = NormSeries()
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(CSV_HEADER):
            raise ValueError(f"line {lineno}: expected {len(CSV_HEADER)} columns, found {len(row)}")
        rec = dict(zip(CSV_HEADER, row))
        series.append(
            int(rec["step"]),
            float(rec["time"]),
            float(rec["norm_V"]),
            float(rec["norm_L2"]),
            float(rec["dissipation_rate"]),
            float(rec["p_diff_integral"]),
        )
    if len(series) == 0:
        raise ValueError("CSV holds no records")
    return series


def verify_csv(text: str, f_max: float, intercept: float, tolerance: float = 0.0) -> BoundReport:
    """Re-check a written series.

    Norms in the file carry 9 significant digits, so the bound is rounded
    the same way before comparing; rounding is monotone, hence a pass in
    process stays a pass here.
    """
    series = read_norm_csv(text)
    report = check_growth_bound(series, f_max, intercept, tolerance=tolerance)
    bounds = [float(_g(b)) for b in report.bounds]
    margins = [b - n for b, n in zip(bounds, series.norm_v)]
    first = next((s for s, m in zip(series.steps, margins) if not m >= -tolerance), None)
    report.bounds, report.margins = bounds, margins
    report.passed, report.first_violation = first is None, first
    return report


def write_report_json(report: BoundReport, extra: dict | None = None) -> str:
    data = report.to_dict()
    if extra:
        data.update(extra)
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


# P3 lattice point (i, j) = (3 xi, 3 eta) -> local node index
_LATTICE = {
    (0, 0): 0, (3, 0): 1, (0, 3): 2,
    (1, 0): 3, (2, 0): 4,
    (2, 1): 5, (1, 2): 6,
    (0, 2): 7, (0, 1): 8,
    (1, 1): 9,
}


def _sub_triangles():
    tris = []
    for j in range(3):
        for i in range(3 - j):
            tris.append((_LATTICE[i, j], _LATTICE[i + 1, j], _LATTICE[i, j + 1]))
            if i + j < 2:
                tris.append((_LATTICE[i + 1, j], _LATTICE[i + 1, j + 1], _LATTICE[i, j + 1]))
    return np.array(tris)


SUB_TRIANGLES = _sub_triangles()


def p1_at_p3_nodes(mesh, dofmap: MixedDofMap, p1_values: np.ndarray) -> np.ndarray:
    """Evaluate a P1 field at the P3 node set."""
    from ..fem import P3

    lam = np.column_stack([1 - P3.nodes.sum(axis=1), P3.nodes])  # (10, 3)
    out = np.empty(dofmap.n3)
    out[dofmap.cell_dofs3] = p1_values[mesh.triangles] @ lam.T
    return out


def write_vtk(mesh, dofmap: MixedDofMap, state, params, title: str = "dpp fields") -> str:
    """Legacy ASCII unstructured grid; each triangle split into 9 through its P3 nodes."""
    x = getattr(state, "coefficients", state)
    n = dofmap.n3
    cells = dofmap.cell_dofs3[:, SUB_TRIANGLES].reshape(-1, 3)
    lines = ["# vtk DataFile Version 3.0", title.replace("\n", " ")[:255], "ASCII", "DATASET UNSTRUCTURED_GRID"]
    lines.append(f"POINTS {n} double")
    lines += [f"{px:.12g} {py:.12g} 0" for px, py in dofmap.nodes3.tolist()]
    lines.append(f"CELLS {len(cells)} {4 * len(cells)}")
    lines += [f"3 {a} {b} {c}" for a, b, c in cells.tolist()]
    lines.append(f"CELL_TYPES {len(cells)}")
    lines += ["5"] * len(cells)
    lines.append(f"POINT_DATA {n}")
    for net in (1, 2):
        vx = x[dofmap.field_slice(f"v{net}x")]
        vy = x[dofmap.field_slice(f"v{net}y")]
        lines.append(f"VECTORS v{net} double")
        lines += [f"{a:.12g} {b:.12g} 0" for a, b in zip(vx.tolist(), vy.tolist())]
    scalars = {
        "p1": p1_at_p3_nodes(mesh, dofmap, x[dofmap.field_slice("p1")]),
        "p2": p1_at_p3_nodes(mesh, dofmap, x[dofmap.field_slice("p2")]),
        "transfer_rate": p1_at_p3_nodes(mesh, dofmap, transfer_field(dofmap, params, x)),
    }
    for name, values in scalars.items():
        lines.append(f"SCALARS {name} double 1")
        lines.append("LOOKUP_TABLE default")
        lines += [f"{v:.12g}" for v in values.tolist()]
    return "\n".join(lines) + "\n"


def write_transfer_csv(mesh, dofmap: MixedDofMap, state, params) -> str:
    rate = transfer_field(dofmap, params, state)
    rows = ["x,y,transfer_rate"]
    rows += [f"{px:.9g},{py:.9g},{r:.9g}" for (px, py), r in zip(mesh.vertices.tolist(), rate.tolist())]
    return "\n".join(rows) + "\n"


@dataclass(frozen=True)
class PlotFrame:
    """Affine map between data coordinates and SVG pixels."""

    x0: float
    x1: float
    y0: float
    y1: float
    left: float = 80.0
    right: float = 770.0
    top: float = 40.0
    bottom: float = 440.0

    def to_px(self, x, y):
        px = self.left + (x - self.x0) / (self.x1 - self.x0) * (self.right - self.left)
        py = self.bottom - (y - self.y0) / (self.y1 - self.y0) * (self.bottom - self.top)
        return px, py

    def from_px(self, px, py):
        x = self.x0 + (px - self.left) / (self.right - self.left) * (self.x1 - self.x0)
        y = self.y0 + (self.bottom - py) / (self.bottom - self.top) * (self.y1 - self.y0)
        return x, y


def _nice_ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    span = hi - lo
    if span <= 0:
        return [lo]
    raw = span / count
    mag = 10 ** np.floor(np.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=raw)
    start = np.ceil(lo / step) * step
    ticks = []
    v = start
    while v <= hi + 1e-9 * span:
        ticks.append(float(round(v / step) * step))
        v += step
    return ticks


def plot_frame(series: NormSeries, report: BoundReport) -> PlotFrame:
    t0, t1 = series.times[0], series.times[-1]
    if t1 <= t0:
        t1 = t0 + 1.0
    ymax = max(max(report.bounds), max(series.norm_v))
    ymax = ymax * 1.05 if ymax > 0 else 1.0
    return PlotFrame(t0, t1, 0.0, ymax)


def write_svg_plot(series: NormSeries, report: BoundReport, title: str = "") -> str:
    """Norm history and the linear growth bound, 800 x 500."""
    if len(series) == 0:
        raise ValueError("empty norm series")
    frame = plot_frame(series, report)

    def points(ys):
        pts = (frame.to_px(t, y) for t, y in zip(series.times, ys))
        return " ".join(f"{px:.3f},{py:.3f}" for px, py in pts)

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        '<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="800" height="500" viewBox="0 0 800 500">',
        '<rect x="0" y="0" width="800" height="500" fill="white"/>',
        f'<line x1="{frame.left}" y1="{frame.bottom}" x2="{frame.right}" y2="{frame.bottom}" stroke="black"/>',
        f'<line x1="{frame.left}" y1="{frame.bottom}" x2="{frame.left}" y2="{frame.top}" stroke="black"/>',
    ]
    for t in _nice_ticks(frame.x0, frame.x1):
        px, _ = frame.to_px(t, 0.0)
        out.append(f'<line x1="{px:.3f}" y1="{frame.bottom}" x2="{px:.3f}" y2="{frame.bottom + 5}" stroke="black"/>')
        out.append(f'<text x="{px:.3f}" y="{frame.bottom + 20}" font-size="12" text-anchor="middle">{t:g}</text>')
    for y in _nice_ticks(frame.y0, frame.y1):
        _, py = frame.to_px(frame.x0, y)
        out.append(f'<line x1="{frame.left - 5}" y1="{py:.3f}" x2="{frame.left}" y2="{py:.3f}" stroke="black"/>')
        out.append(f'<text x="{frame.left - 8}" y="{py + 4:.3f}" font-size="12" text-anchor="end">{y:g}</text>')
    out.append(f'<text x="{(frame.left + frame.right) / 2}" y="480" font-size="14" text-anchor="middle">time</text>')
    out.append(f'<text x="20" y="{(frame.top + frame.bottom) / 2}" font-size="14" text-anchor="middle" '
               f'transform="rotate(-90 20 {(frame.top + frame.bottom) / 2})">norm</text>')
    if title:
        out.append(f'<text x="400" y="24" font-size="16" text-anchor="middle">{_escape(title)}</text>')
    out.append(f'<polyline id="bound" fill="none" stroke="#d62728" stroke-dasharray="6,4" points="{points(report.bounds)}"/>')
    out.append(f'<polyline id="norm" fill="none" stroke="#1f77b4" stroke-width="2" points="{points(series.norm_v)}"/>')
    legend_y = frame.top + 15
    out.append(f'<text x="{frame.right - 10}" y="{legend_y}" font-size="12" text-anchor="end" fill="#1f77b4">velocity norm</text>')
    out.append(f'<text x="{frame.right - 10}" y="{legend_y + 16}" font-size="12" text-anchor="end" fill="#d62728">'
               f'bound {_g(report.f_max)} t + {_g(report.intercept)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def write_mesh_svg(mesh, size: int = 500) -> str:
    """Wireframe of the triangulation, unit square scaled to ``size`` pixels."""
    pad = 10
    scale = size - 2 * pad
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<rect x="0" y="0" width="{size}" height="{size}" fill="white"/>',
        '<g fill="none" stroke="black" stroke-width="0.7">',
    ]
    for a, b in mesh.edges.tolist():
        (x0, y0), (x1, y1) = mesh.vertices[a], mesh.vertices[b]
        out.append(
            f'<line x1="{pad + x0 * scale:.3f}" y1="{pad + (1 - y0) * scale:.3f}" '
            f'x2="{pad + x1 * scale:.3f}" y2="{pad + (1 - y1) * scale:.3f}"/>'
        )
    out += ["</g>", "</svg>"]
    return "\n".join(out) + "\n"
