"""Physical model of double porosity/permeability flow.

Network 1 is the macro-pore network, network 2 the micro-pore network.
Drag tensors are stored as ``mu * K^{-1}``, the quantity usually
tabulated for this model.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .expr import Expression, eval_expression, parse_expression

SIDES = ("left", "right", "bottom", "top")


def _as_expr(value) -> Expression:
    if isinstance(value, Expression):
        return value
    return parse_expression(str(value))


@dataclass(frozen=True)
class MediumParameters:
    gamma: float
    mu: float
    beta: float
    phi1: float
    phi2: float
    drag1: np.ndarray
    drag2: np.ndarray

    def __post_init__(self):
        for name in ("drag1", "drag2"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __eq__(self, other):
        if not isinstance(other, MediumParameters):
            return NotImplemented
        return (
            (self.gamma, self.mu, self.beta, self.phi1, self.phi2)
            == (other.gamma, other.mu, other.beta, other.phi1, other.phi2)
            and np.array_equal(self.drag1, other.drag1)
            and np.array_equal(self.drag2, other.drag2)
        )

    __hash__ = None

    @property
    def rho1(self) -> float:
        return self.gamma * self.phi1

    @property
    def rho2(self) -> float:
        return self.gamma * self.phi2

    def phi(self, network: int) -> float:
        return _pick(network, self.phi1, self.phi2)

    def rho(self, network: int) -> float:
        return _pick(network, self.rho1, self.rho2)

    def drag(self, network: int) -> np.ndarray:
        return _pick(network, self.drag1, self.drag2)


def _pick(network, first, second):
    if network == 1:
        return first
    if network == 2:
        return second
    raise ValueError(f"network must be 1 or 2, got {network!r}")


def reference_parameters() -> MediumParameters:
    """Parameter set of the reference experiment."""
    return MediumParameters(
        gamma=1.0,
        mu=1.0,
        beta=0.5,
        phi1=0.2,
        phi2=0.05,
        drag1=np.array([[1.0, 0.1], [0.1, 0.9]]),
        drag2=np.array([[100.0, 5.0], [5.0, 100.0]]),
    )


def validate_parameters(params: MediumParameters) -> list[str]:
    """Return every violated constraint by name; an empty list means valid."""
    problems = []
    if not params.gamma > 0:
        problems.append("gamma must be positive")
    if not params.mu > 0:
        problems.append("mu must be positive")
    if not params.beta >= 0:
        problems.append("beta must be non-negative")
    for name in ("phi1", "phi2"):
        value = getattr(params, name)
        if not 0 < value < 1:
            problems.append(f"{name} must lie in (0, 1)")
    if not params.phi1 + params.phi2 < 1:
        problems.append("phi1 + phi2 must be less than 1")
    for name in ("drag1", "drag2"):
        tensor = getattr(params, name)
        if tensor.shape != (2, 2) or not np.all(np.isfinite(tensor)):
            problems.append(f"{name} must be a finite 2x2 tensor")
            continue
        if not np.array_equal(tensor, tensor.T):
            problems.append(f"{name} must be symmetric")
            continue
        eig = np.linalg.eigvalsh(tensor)
        if eig.min() <= 0:
            problems.append(
                f"{name} must be positive definite (smallest eigenvalue {eig.min():g})"
            )
    if params.gamma > 0 and not (params.rho1 > 0 and params.rho2 > 0):
        problems.append("bulk densities rho1, rho2 must be positive")
    return problems


@dataclass(frozen=True)
class BodyForceSpec:
    """Specific body force shared by both networks."""

    bx: Expression
    by: Expression
    amplitude_bounds: tuple[float, float] | None = None

    @classmethod
    def from_strings(cls, bx, by, amplitude_bounds=None):
        bounds = None if amplitude_bounds is None else tuple(float(b) for b in amplitude_bounds)
        return cls(_as_expr(bx), _as_expr(by), bounds)


def eval_body_force(spec: BodyForceSpec, x, y, t):
    return eval_expression(spec.bx, x, y, t), eval_expression(spec.by, x, y, t)


def case1_body_force() -> BodyForceSpec:
    return BodyForceSpec.from_strings("10*sin(pi*x*t)", "5*sin(2*pi*x*y*t)", (10.0, 5.0))


def case2_body_force() -> BodyForceSpec:
    return BodyForceSpec.from_strings("0", "-10", (0.0, 10.0))


def zero_body_force() -> BodyForceSpec:
    return BodyForceSpec.from_strings("0", "0", (0.0, 0.0))


@dataclass(frozen=True)
class InitialConditionSpec:
    """Darcy (discharge) velocities ``u = phi * v`` of both networks at t = 0."""

    u1x: Expression
    u1y: Expression
    u2x: Expression
    u2y: Expression

    @classmethod
    def from_strings(cls, u1x, u1y, u2x, u2y):
        return cls(_as_expr(u1x), _as_expr(u1y), _as_expr(u2x), _as_expr(u2y))

    def darcy(self, network: int) -> tuple[Expression, Expression]:
        return _pick(network, (self.u1x, self.u1y), (self.u2x, self.u2y))


def reference_initial_condition() -> InitialConditionSpec:
    return InitialConditionSpec.from_strings(
        "sin(pi*x)*cos(pi*y)", "-cos(pi*x)*sin(pi*y)", "0", "0"
    )


def zero_initial_condition() -> InitialConditionSpec:
    return InitialConditionSpec.from_strings("0", "0", "0", "0")


def eval_initial_true_velocity(spec: InitialConditionSpec, params: MediumParameters, network: int, x, y):
    ux, uy = spec.darcy(network)
    phi = params.phi(network)
    return eval_expression(ux, x, y, 0.0) / phi, eval_expression(uy, x, y, 0.0) / phi


@dataclass(frozen=True)
class SideCondition:
    """One network's condition on one side: ``velocity`` prescribes v.n, ``pressure`` prescribes p.

    ``value`` is an expression (or its source text) or a vectorised
    callable ``f(x, y, t)``.
    """

    kind: str
    value: object

    def __post_init__(self):
        if self.kind not in ("velocity", "pressure"):
            raise ValueError(f"boundary kind must be 'velocity' or 'pressure', got {self.kind!r}")
        if not callable(self.value) or isinstance(self.value, Expression):
            object.__setattr__(self, "value", _as_expr(self.value))


def _no_flow_sides():
    return {side: SideCondition("velocity", parse_expression("0")) for side in SIDES}


@dataclass(frozen=True)
class BoundaryConditionSpec:
    network1: dict = field(default_factory=_no_flow_sides)
    network2: dict = field(default_factory=_no_flow_sides)

    def __post_init__(self):
        for name in ("network1", "network2"):
            sides = getattr(self, name)
            if set(sides) != set(SIDES):
                raise ValueError(
                    f"{name} needs exactly one condition on each of {', '.join(SIDES)}"
                )

    def side(self, network: int, side: str) -> SideCondition:
        return _pick(network, self.network1, self.network2)[side]

    def pressure_sides(self, network: int) -> list[str]:
        return [s for s in SIDES if self.side(network, s).kind == "pressure"]

    def velocity_sides(self, network: int) -> list[str]:
        return [s for s in SIDES if self.side(network, s).kind == "velocity"]

    def is_homogeneous_no_flow(self) -> bool:
        for network in (1, 2):
            for s in SIDES:
                cond = self.side(network, s)
                if cond.kind != "velocity" or not isinstance(cond.value, Expression):
                    return False
                if cond.value.tree != parse_expression("0").tree:
                    return False
        return True


def no_flow_boundary() -> BoundaryConditionSpec:
    return BoundaryConditionSpec()


def transfer_rate(params: MediumParameters, p1, p2):
    """Volumetric transfer rate from the micro- to the macro-pore network."""
    return -(params.beta / params.mu) * (p1 - p2)


def drag_apply(params: MediumParameters, network: int, v):
    """Return ``mu phi^2 K^{-1} v`` for the chosen network."""
    v = np.asarray(v, dtype=float)
    phi = params.phi(network)
    return phi**2 * (v @ params.drag(network).T)
