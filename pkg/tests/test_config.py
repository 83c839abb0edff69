import numpy as np
import pytest

from dppsim.app.config import BUNDLED, ConfigError, config_from_dict, dump_config, load_config, read_config
from dppsim.model import case1_body_force, case2_body_force, reference_parameters

MINIMAL = """
params: {gamma: 1, mu: 1, beta: 0.5, phi1: 0.2, phi2: 0.05, drag1: [[1, 0.1], [0.1, 0.9]], drag2: [[100, 5], [5, 100]]}
body_force: {bx: "0", by: "-10", amplitude_bounds: [0, 10]}
initial: {u1x: "0", u1y: "0", u2x: "0", u2y: "0"}
"""


@pytest.mark.parametrize("name", BUNDLED)
def test_bundled_configs_load(name):
    cfg = load_config(name)
    assert cfg.name == name
    assert cfg.parameters() == reference_parameters()
    assert (cfg.mesh.nx, cfg.mesh.ny, cfg.time.dt, cfg.time.t_end) == (20, 20, 0.001, 2.0)
    assert cfg.boundary_spec().is_homogeneous_no_flow()


def test_case_forces_match_reference():
    assert load_config("case1").body_force_spec() == case1_body_force()
    assert load_config("case2.cfg").body_force_spec() == case2_body_force()


def test_defaults():
    cfg = read_config(MINIMAL)
    assert (cfg.mesh.nx, cfg.mesh.ny) == (20, 20)
    assert (cfg.time.dt, cfg.time.t_end) == (0.001, 2.0)
    assert cfg.diagnostics.record_every == 1 and cfg.diagnostics.fmax_mode == "amplitude-bound"
    assert cfg.diagnostics.bound_tolerance == 0.0
    assert cfg.boundary_spec().is_homogeneous_no_flow()


def test_unknown_key_named():
    with pytest.raises(ConfigError, match=r"params\.viscocity: unknown key"):
        read_config(MINIMAL.replace("gamma: 1,", "gamma: 1, viscocity: 1,"))


def test_empty_document_lists_required_keys():
    with pytest.raises(ConfigError) as info:
        read_config("")
    for key in ("params", "body_force", "initial"):
        assert f"{key}: Field required" in str(info.value)


def test_expression_error_has_path_and_offset():
    with pytest.raises(ConfigError) as info:
        read_config(MINIMAL.replace('by: "-10"', 'by: "sin(x"'))
    msg = str(info.value)
    assert msg.startswith("body_force.by:") and "offset 5" in msg


def test_invalid_physics_rejected():
    with pytest.raises(ConfigError, match="phi1"):
        read_config(MINIMAL.replace("phi1: 0.2", "phi1: 1.2"))
    with pytest.raises(ConfigError, match="t_end"):
        read_config(MINIMAL + "time: {dt: 0.1, t_end: 0.01}\n")
    with pytest.raises(ConfigError, match="amplitude"):
        read_config(MINIMAL.replace(", amplitude_bounds: [0, 10]", ""))


def test_pressure_boundary_parsed():
    cfg = read_config(MINIMAL + 'boundary:\n  top:\n    network2: {kind: pressure, value: "1 - x"}\n')
    bcs = cfg.boundary_spec()
    assert bcs.pressure_sides(2) == ["top"] and bcs.pressure_sides(1) == []


def test_round_trip():
    for name in BUNDLED:
        cfg = load_config(name)
        assert read_config(dump_config(cfg)) == cfg
    cfg = config_from_dict({**read_config(MINIMAL).model_dump(mode="json"), "name": "x"})
    assert read_config(dump_config(cfg)) == cfg


def test_malformed_and_missing():
    with pytest.raises(ConfigError, match="malformed"):
        read_config("params: [unclosed")
    with pytest.raises(ConfigError, match="mapping"):
        read_config("- 1\n- 2\n")
    with pytest.raises(ConfigError, match="not found"):
        load_config("/nonexistent/case9.cfg")
