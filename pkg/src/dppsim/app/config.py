"""Run configuration documents.

A configuration is a YAML mapping.  Expression-valued keys are quoted
strings in the language of :mod:`dppsim.expr`.  Unknown keys are errors;
``params``, ``body_force`` and ``initial`` are required, everything else
has a default (the boundary defaults to no flow on every side for both
networks).
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path
from typing import Literal, Optional

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from ..diagnostics import FMAX_MODES
from ..expr import ExpressionError, parse_expression
from ..mesh import generate_unit_square_mesh
from ..model import (
    SIDES,
    BodyForceSpec,
    BoundaryConditionSpec,
    InitialConditionSpec,
    MediumParameters,
    SideCondition,
    validate_parameters,
)
from ..system import SolverConfig

BUNDLED = ("case1", "case2", "free_decay")


class ConfigError(ValueError):
    pass


def _check_expr(value: str) -> str:
    try:
        parse_expression(value)
    except ExpressionError as exc:
        raise ValueError(f"invalid expression {value!r}: {exc}") from None
    return value


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class MeshConfig(_Strict):
    nx: int = Field(20, ge=1)
    ny: int = Field(20, ge=1)


class TimeConfig(_Strict):
    dt: float = Field(0.001, gt=0)
    t_end: float = Field(2.0, gt=0)

    @model_validator(mode="after")
    def _horizon(self):
        if self.t_end < self.dt:
            raise ValueError("t_end must be at least dt")
        return self


class ParamsConfig(_Strict):
    gamma: float
    mu: float
    beta: float
    phi1: float
    phi2: float
    drag1: tuple[tuple[float, float], tuple[float, float]]
    drag2: tuple[tuple[float, float], tuple[float, float]]

    @model_validator(mode="after")
    def _physical(self):
        problems = validate_parameters(self.to_parameters())
        if problems:
            raise ValueError("; ".join(problems))
        return self

    def to_parameters(self) -> MediumParameters:
        return MediumParameters(
            self.gamma, self.mu, self.beta, self.phi1, self.phi2, np.array(self.drag1), np.array(self.drag2)
        )


class BodyForceConfig(_Strict):
    bx: str
    by: str
    amplitude_bounds: Optional[tuple[float, float]] = None

    _exprs = field_validator("bx", "by")(_check_expr)


class InitialConfig(_Strict):
    u1x: str
    u1y: str
    u2x: str
    u2y: str

    _exprs = field_validator("u1x", "u1y", "u2x", "u2y")(_check_expr)


class SideConfig(_Strict):
    kind: Literal["velocity", "pressure"] = "velocity"
    value: str = "0"

    _exprs = field_validator("value")(_check_expr)


class SideNetworks(_Strict):
    network1: SideConfig = SideConfig()
    network2: SideConfig = SideConfig()


class BoundaryConfig(_Strict):
    left: SideNetworks = SideNetworks()
    right: SideNetworks = SideNetworks()
    bottom: SideNetworks = SideNetworks()
    top: SideNetworks = SideNetworks()

    def to_spec(self) -> BoundaryConditionSpec:
        nets = {1: {}, 2: {}}
        for side in SIDES:
            sc = getattr(self, side)
            for net in (1, 2):
                cfg = getattr(sc, f"network{net}")
                nets[net][side] = SideCondition(cfg.kind, cfg.value)
        return BoundaryConditionSpec(nets[1], nets[2])


class DiagnosticsConfig(_Strict):
    fmax_mode: Literal[FMAX_MODES] = "amplitude-bound"
    fmax_samples: int = Field(2001, ge=2)
    record_every: int = Field(1, ge=1)
    quadrature_degree: int = Field(8, ge=1, le=10)
    bound_tolerance: float = Field(0.0, ge=0)


class OutputConfig(_Strict):
    directory: str = "output"
    vtk_every: int = Field(0, ge=0)  # 0 disables field export


class RunConfig(_Strict):
    name: str = "run"
    mesh: MeshConfig = MeshConfig()
    time: TimeConfig = TimeConfig()
    params: ParamsConfig
    body_force: BodyForceConfig
    initial: InitialConfig
    boundary: BoundaryConfig = BoundaryConfig()
    diagnostics: DiagnosticsConfig = DiagnosticsConfig()
    output: OutputConfig = OutputConfig()

    @model_validator(mode="after")
    def _amplitudes(self):
        if self.diagnostics.fmax_mode == "amplitude-bound" and self.body_force.amplitude_bounds is None:
            raise ValueError("fmax_mode amplitude-bound needs body_force.amplitude_bounds")
        return self

    def build_mesh(self):
        return generate_unit_square_mesh(self.mesh.nx, self.mesh.ny)

    def parameters(self) -> MediumParameters:
        return self.params.to_parameters()

    def body_force_spec(self) -> BodyForceSpec:
        return BodyForceSpec.from_strings(self.body_force.bx, self.body_force.by, self.body_force.amplitude_bounds)

    def initial_spec(self) -> InitialConditionSpec:
        i = self.initial
        return InitialConditionSpec.from_strings(i.u1x, i.u1y, i.u2x, i.u2y)

    def boundary_spec(self) -> BoundaryConditionSpec:
        return self.boundary.to_spec()

    def solver_config(self) -> SolverConfig:
        return SolverConfig(self.time.dt, self.time.t_end, self.diagnostics.quadrature_degree)


def _format_errors(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        path = ".".join(str(p) for p in err["loc"]) or "<document>"
        msg = err["msg"]
        if err["type"] == "extra_forbidden":
            msg = "unknown key"
        lines.append(f"{path}: {msg}")
    return "\n".join(lines)


def config_from_dict(data) -> RunConfig:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("configuration document must be a mapping")
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc)) from None


def read_config(text: str) -> RunConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed document: {exc}") from None
    return config_from_dict(data)


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.model_dump(mode="json"), sort_keys=False)


def bundled_config_text(name: str) -> str:
    if name not in BUNDLED:
        raise ConfigError(f"no bundled configuration {name!r}; available: {', '.join(BUNDLED)}")
    return resources.files("dppsim.app").joinpath("configs").joinpath(f"{name}.cfg").read_text()


def load_config(path_or_name: str) -> RunConfig:
    """Read a configuration file, or a bundled one by name (``case1``, ``case2``, ``free_decay``)."""
    path = Path(path_or_name)
    if path.is_file():
        return read_config(path.read_text())
    stem = path.name[:-4] if path.name.endswith(".cfg") else path.name
    if stem in BUNDLED and not path.exists():
        return read_config(bundled_config_text(stem))
    raise ConfigError(f"configuration file not found: {path_or_name}")
