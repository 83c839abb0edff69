import math

import numpy as np
import pytest
import sympy as sy

from dppsim.app.runner import MMS_PRESSURE_SIDES
from dppsim.mms import (
    X,
    Y,
    ConvergenceReport,
    ManufacturedSolution,
    field_errors,
    manufactured_boundary,
    mms_study,
    polynomial_solution,
    solve_manufactured,
    trigonometric_solution,
)
from dppsim.model import reference_parameters


@pytest.fixture(scope="module")
def trig_report():
    return mms_study(trigonometric_solution(), (4, 8, 16), pressure_sides=MMS_PRESSURE_SIDES)


@pytest.mark.parametrize("n", [1, 2, 4, 8])
def test_polynomial_reproduced(n):
    sol = polynomial_solution()
    matrices, state = solve_manufactured(sol, n)
    errs = field_errors(sol, matrices, state)
    assert max(errs.values()) <= 1e-10


def test_polynomial_reproduced_with_pressure_sides():
    sol = polynomial_solution()
    matrices, state = solve_manufactured(sol, 4, pressure_sides={1: ("left",), 2: ("right", "top")})
    assert max(field_errors(sol, matrices, state).values()) <= 1e-10


def test_sources_vanish_for_a_true_solution():
    # hydrostatic: v = 0, phi grad p = rho b with b = (0, -10), p = -10 y in both networks
    p = reference_parameters()
    sol = ManufacturedSolution("rest", {"v1x": 0, "v1y": 0, "v2x": 0, "v2y": 0, "p1": "-10*y", "p2": "-10*y"})
    (b1, b2), g1, g2 = sol.sources(p)
    x = np.linspace(0, 1, 5)
    for bx, by in (b1, b2):
        assert np.allclose(bx(x, x, 0.0), 0) and np.allclose(by(x, x, 0.0), -10)
    assert np.allclose(g1(x, x, 0.0), 0) and np.allclose(g2(x, x, 0.0), 0)


def test_mass_source_contains_transfer():
    p = reference_parameters()
    sol = ManufacturedSolution("jump", {"v1x": "x", "v1y": 0, "v2x": 0, "v2y": 0, "p1": 1, "p2": 0})
    _, g1, g2 = sol.sources(p)
    assert g1(0.3, 0.3, 0.0) == pytest.approx(0.2 + 0.5)
    assert g2(0.3, 0.3, 0.0) == pytest.approx(-0.5)


def test_manufactured_boundary_data():
    sol = trigonometric_solution()
    bcs = manufactured_boundary(sol, {2: ("top",)})
    assert bcs.pressure_sides(2) == ["top"] and bcs.pressure_sides(1) == []
    left = bcs.side(1, "left").value
    # v.n on the left side is -v1x = -(sin(0) cos(pi y) + y^2)
    assert left(np.array([0.0]), np.array([0.5]), 0.0)[0] == pytest.approx(-0.25)


def test_trig_errors_decrease(trig_report):
    assert trig_report.strictly_decreasing()
    assert all(e > 0 for errs in trig_report.errors.values() for e in errs)


def test_trig_pressure_order(trig_report):
    assert trig_report.min_order("pressure") >= 1.5


def test_trig_velocity_order_is_first(trig_report):
    # measured behaviour of this discretisation: v_h follows grad p_h, which is O(h) accurate
    for key in ("v1", "v2"):
        assert all(0.85 <= o <= 1.2 for o in trig_report.orders[key])


def test_report_serialises(trig_report):
    d = trig_report.to_dict()
    assert d["levels"] == [4, 8, 16] and d["h"] == [0.25, 0.125, 0.0625]
    assert set(d["orders"]) == {"v1", "v2", "p1", "p2"} and all(len(v) == 2 for v in d["orders"].values())


def test_needs_three_levels():
    with pytest.raises(ValueError, match="3"):
        mms_study(polynomial_solution(), (4, 8))
