"""Longitudinal fixed-wing dynamics and their affine forms.

States are ``(V, gamma, theta, q)``; inputs are thrust ``F`` and elevator
deflection ``delta_e``. Lift and pitching moment both depend on the
elevator, so the dynamics are not in strict-feedback form.

Two error-state conventions are used:

* two-output:   ``x = [V - Vbar, gamma - gammabar, theta, q]``,  ``y = x[:2]``
* three-output: ``x = [V - Vbar, gamma - gammabar, theta - thetabar, q]``, ``y = x[:3]``
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .affine import AffineSystem, ScalarField
from .errors import DomainError

SINGULAR_COS_FLOOR = 1e-3

TWO_OUTPUT = "two-output"
THREE_OUTPUT = "three-output"
MODES = (TWO_OUTPUT, THREE_OUTPUT)


@dataclass(frozen=True)
class AircraftParams:
    m: float
    g: float
    rho_air: float
    S: float
    cbar: float
    I_yy: float
    C_L0: float
    C_Lalpha: float
    C_Ldelta_e: float
    C_D0: float
    C_Dalpha: float
    C_m0: float
    C_malpha: float
    C_mdelta_e: float

    def __post_init__(self):
        for name in ("m", "S", "cbar", "I_yy", "rho_air"):
            val = getattr(self, name)
            if not val > 0:
                raise ValueError(f"{name} must be strictly positive, got {val}")
        for name in ("C_Ldelta_e", "C_mdelta_e"):
            if getattr(self, name) == 0:
                raise ValueError(f"{name} must be nonzero")
        for f in fields(self):
            if not math.isfinite(getattr(self, f.name)):
                raise ValueError(f"{f.name} must be finite")

    @classmethod
    def from_dict(cls, data: dict) -> "AircraftParams":
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ValueError(f"unknown aircraft parameter(s): {', '.join(unknown)}")
        missing = sorted(names - set(data))
        if missing:
            raise ValueError(f"missing aircraft parameter(s): {', '.join(missing)}")
        return cls(**{k: float(v) for k, v in data.items()})

    @classmethod
    def from_json(cls, path) -> "AircraftParams":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        # underscore-prefixed keys carry documentation only
        return cls.from_dict({k: v for k, v in data.items() if not k.startswith("_")})

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def replace(self, **changes) -> "AircraftParams":
        return replace(self, **changes)


def default_params_path() -> Path:
    return Path(__file__).with_name("data") / "widebody_reconstructed.json"


def load_default_params() -> AircraftParams:
    return AircraftParams.from_json(default_params_path())


@dataclass(frozen=True)
class FlightState:
    V: float
    gamma: float
    theta: float
    q: float

    @property
    def alpha(self) -> float:
        return self.theta - self.gamma

    def as_array(self) -> np.ndarray:
        return np.array([self.V, self.gamma, self.theta, self.q])

    @classmethod
    def from_array(cls, a) -> "FlightState":
        return cls(*(float(v) for v in a))


@dataclass(frozen=True)
class ControlInput:
    F: float
    delta_e: float

    def as_array(self) -> np.ndarray:
        return np.array([self.F, self.delta_e])


@dataclass(frozen=True)
class ReferenceSignal:
    """Constant reference values and their time derivatives.

    Step commands are represented by the post-step values, so the
    derivatives default to zero.
    """

    V_bar: float
    gamma_bar: float = 0.0
    theta_bar: float = 0.0
    V_bar_dot: float = 0.0
    gamma_bar_dot: float = 0.0
    theta_bar_dot: float = 0.0
    theta_bar_ddot: float = 0.0

    def __post_init__(self):
        if not self.V_bar > 0:
            raise ValueError("reference airspeed must be positive")


@dataclass(frozen=True)
class TransformedState:
    xi: np.ndarray
    eta: np.ndarray


def aero_coefficients(p: AircraftParams, alpha: float, delta_e: float) -> tuple[float, float, float]:
    """Lift, drag and pitching-moment coefficients (drag has no elevator term)."""
    c_l = p.C_L0 + p.C_Lalpha * alpha + p.C_Ldelta_e * delta_e
    c_d = p.C_D0 + p.C_Dalpha * alpha
    c_m = p.C_m0 + p.C_malpha * alpha + p.C_mdelta_e * delta_e
    return c_l, c_d, c_m


def forces_moment(p: AircraftParams, state: FlightState, inp: ControlInput) -> tuple[float, float, float]:
    if not state.V > 0:
        raise DomainError(f"airspeed must be positive, got V={state.V}")
    c_l, c_d, c_m = aero_coefficients(p, state.alpha, inp.delta_e)
    qs = 0.5 * p.rho_air * state.V**2 * p.S
    return qs * c_l, qs * c_d, qs * p.cbar * c_m


def dynamics_rhs(p: AircraftParams, state: FlightState, inp: ControlInput) -> np.ndarray:
    """``(Vdot, gammadot, thetadot, qdot)``."""
    lift, drag, moment = forces_moment(p, state, inp)
    alpha = state.alpha
    v_dot = (inp.F * math.cos(alpha) - drag - p.m * p.g * math.sin(state.gamma)) / p.m
    gamma_dot = (inp.F * math.sin(alpha) + lift - p.m * p.g * math.cos(state.gamma)) / (p.m * state.V)
    return np.array([v_dot, gamma_dot, state.q, moment / p.I_yy])


def dynamics_rhs_array(p: AircraftParams, s: np.ndarray, u: np.ndarray) -> np.ndarray:
    return dynamics_rhs(p, FlightState.from_array(s), ControlInput(float(u[0]), float(u[1])))


# state rows holding the highest output derivative of each output
_ROWS = {TWO_OUTPUT: [0, 1], THREE_OUTPUT: [0, 1, 3]}


class _Model:
    """Closed-form drift and input matrix in error coordinates for one mode.

    The pitch row scales with ``rho V S cbar / (2 I_yy)``, one airspeed
    factor below ``M / I_yy``. The internal coordinates and zero dynamics
    are built on this form. Equilibria agree with :func:`dynamics_rhs`
    because both vanish exactly when ``C_m = 0``.
    """

    def __init__(self, p: AircraftParams, ref: ReferenceSignal, mode: str):
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
        self.p = p
        self.ref = ref
        self.mode = mode
        self.theta_off = ref.theta_bar if mode == THREE_OUTPUT else 0.0
        self.k_lift = p.rho_air * p.S / (2.0 * p.m)
        self.k_moment = p.rho_air * p.S * p.cbar / (2.0 * p.I_yy)

    def airspeed(self, x):
        return x[0] + self.ref.V_bar

    def aoa(self, x):
        return x[2] + self.theta_off - x[1] - self.ref.gamma_bar

    def f(self, x):
        p, ref = self.p, self.ref
        x = x.tolist() if isinstance(x, np.ndarray) else x
        V = self.airspeed(x)
        a = self.aoa(x)
        gam = x[1] + ref.gamma_bar
        f1 = -self.k_lift * V**2 * (p.C_D0 + p.C_Dalpha * a) - p.g * math.sin(gam) - ref.V_bar_dot
        f2 = self.k_lift * V * (p.C_L0 + p.C_Lalpha * a) - p.g * math.cos(gam) / V - ref.gamma_bar_dot
        f4 = self.k_moment * V * (p.C_m0 + p.C_malpha * a)
        if self.mode == THREE_OUTPUT:
            f4 -= ref.theta_bar_ddot
        return np.array([f1, f2, x[3], f4])

    def jac_f(self, x):
        p, ref = self.p, self.ref
        x = x.tolist() if isinstance(x, np.ndarray) else x
        V = self.airspeed(x)
        a = self.aoa(x)
        gam = x[1] + ref.gamma_bar
        kl, km = self.k_lift, self.k_moment
        cd = p.C_D0 + p.C_Dalpha * a
        cl = p.C_L0 + p.C_Lalpha * a
        cm = p.C_m0 + p.C_malpha * a
        return np.array(
            [
                [-2 * kl * V * cd, kl * V**2 * p.C_Dalpha - p.g * math.cos(gam), -kl * V**2 * p.C_Dalpha, 0.0],
                [kl * cl + p.g * math.cos(gam) / V**2, -kl * V * p.C_Lalpha + p.g * math.sin(gam) / V, kl * V * p.C_Lalpha, 0.0],
                [0.0, 0.0, 0.0, 1.0],
                [km * cm, -km * V * p.C_malpha, km * V * p.C_malpha, 0.0],
            ]
        )

    def g(self, x):
        p = self.p
        x = x.tolist() if isinstance(x, np.ndarray) else x
        V = self.airspeed(x)
        a = self.aoa(x)
        return np.array(
            [
                [math.cos(a) / p.m, 0.0],
                [math.sin(a) / (p.m * V), self.k_lift * V * p.C_Ldelta_e],
                [0.0, 0.0],
                [0.0, self.k_moment * V * p.C_mdelta_e],
            ]
        )

    def admissible(self, x):
        return bool(self.airspeed(x) > 0 and abs(self.aoa(x)) < math.pi / 2)

    def singularity(self, x):
        V = self.airspeed(x)
        if not V > 0:
            return f"airspeed V={V:.6g} is not positive"
        c = math.cos(self.aoa(x))
        if abs(c) < SINGULAR_COS_FLOOR:
            return f"|cos(angle of attack)|={abs(c):.3g} below {SINGULAR_COS_FLOOR}"
        return None

    # rows of gamma(x) and the matching L_f^rho h stack, in closed form
    def gamma(self, x):
        gx = self.g(x)
        return gx[_ROWS[self.mode]]

    def lf_rho(self, x):
        fx = self.f(x)
        return fx[_ROWS[self.mode]]


def _build(p, ref, mode):
    model = _Model(p, ref, mode)
    n_out = 2 if mode == TWO_OUTPUT else 3
    c = np.eye(4)[:n_out]
    outputs = tuple(ScalarField.linear(c[i], name=f"h{i + 1}") for i in range(n_out))
    return AffineSystem(
        n_state=4,
        n_input=2,
        n_output=n_out,
        f=model.f,
        g=model.g,
        h=lambda x: np.asarray(x, dtype=float)[:n_out].copy(),
        jac_f=model.jac_f,
        jac_h=lambda x: c,
        outputs=outputs,
        admissible=model.admissible,
        singularity=model.singularity,
        name=f"aircraft-{mode}",
    )


def build_two_output_system(p: AircraftParams, ref: ReferenceSignal) -> AffineSystem:
    """Velocity and flight-path-angle errors as outputs; pitch kept absolute."""
    return _build(p, ref, TWO_OUTPUT)


def build_three_output_system(p: AircraftParams, ref: ReferenceSignal) -> AffineSystem:
    """Velocity, flight-path and pitch errors as outputs."""
    return _build(p, ref, THREE_OUTPUT)


def build_system(p: AircraftParams, ref: ReferenceSignal, mode: str) -> AffineSystem:
    return _build(p, ref, mode)


def closed_form_evaluators(p: AircraftParams, ref: ReferenceSignal, mode: str):
    """Hand-derived ``gamma(x)`` and ``L_f^rho h(x)`` evaluators for a mode."""
    model = _Model(p, ref, mode)
    return model.gamma, model.lf_rho


def to_error_state(ref: ReferenceSignal, state, mode: str) -> np.ndarray:
    s = state.as_array() if isinstance(state, FlightState) else np.asarray(state, dtype=float)
    theta_off = ref.theta_bar if mode == THREE_OUTPUT else 0.0
    return np.array([s[0] - ref.V_bar, s[1] - ref.gamma_bar, s[2] - theta_off, s[3]])


def to_flight_state(ref: ReferenceSignal, x: np.ndarray, mode: str) -> np.ndarray:
    theta_off = ref.theta_bar if mode == THREE_OUTPUT else 0.0
    return np.array([x[0] + ref.V_bar, x[1] + ref.gamma_bar, x[2] + theta_off, x[3]])


def eta_gain(p: AircraftParams) -> float:
    """Coefficient of the flight-path error in the second internal coordinate."""
    return p.m * p.cbar * p.C_mdelta_e / (p.I_yy * p.C_Ldelta_e)


def internal_coordinates(p: AircraftParams, ref: ReferenceSignal):
    """The two internal-coordinate fields ``eta_1``, ``eta_2`` of the two-output system."""

    def eta1(x):
        return math.sin(x[2] - x[1] - ref.gamma_bar) * (x[0] + ref.V_bar)

    def eta1_grad(x):
        a = x[2] - x[1] - ref.gamma_bar
        V = x[0] + ref.V_bar
        return np.array([math.sin(a), -math.cos(a) * V, math.cos(a) * V, 0.0])

    k = eta_gain(p)
    c2 = np.array([0.0, k, 0.0, -1.0])
    return (
        ScalarField(eta1, eta1_grad, name="eta1"),
        ScalarField.linear(c2, name="eta2"),
    )


def diffeo_forward(p: AircraftParams, ref: ReferenceSignal, x: np.ndarray) -> TransformedState:
    x = np.asarray(x, dtype=float)
    e1, e2 = internal_coordinates(p, ref)
    return TransformedState(xi=x[:2].copy(), eta=np.array([e1(x), e2(x)]))


def diffeo_inverse(p: AircraftParams, ref: ReferenceSignal, t: TransformedState) -> np.ndarray:
    xi1, xi2 = (float(v) for v in t.xi)
    eta1, eta2 = (float(v) for v in t.eta)
    V = xi1 + ref.V_bar
    if not V > 0:
        raise DomainError(f"xi1 + V_bar must be positive (xi1={xi1}, V_bar={ref.V_bar})")
    if abs(eta1) > V:
        raise DomainError(f"arcsin argument out of range: |eta1|={abs(eta1)} > xi1 + V_bar={V} (xi1={xi1})")
    x3 = math.asin(eta1 / V) + xi2 + ref.gamma_bar
    x4 = eta_gain(p) * xi2 - eta2
    return np.array([xi1, xi2, x3, x4])


def zero_dynamics_rhs(p: AircraftParams, ref: ReferenceSignal, eta: np.ndarray) -> np.ndarray:
    """Internal dynamics with velocity and flight-path errors pinned at zero."""
    eta1, eta2 = (float(v) for v in eta)
    Vb = ref.V_bar
    if abs(eta1) >= Vb:
        raise DomainError(f"|eta1|={abs(eta1)} must be below V_bar={Vb}")
    a = math.asin(eta1 / Vb)
    kl = p.rho_air * Vb * p.S / (2 * p.m)
    eta1_dot = eta1 * (
        -kl * (p.C_D0 + p.C_Dalpha * a) - p.g * math.sin(ref.gamma_bar) / Vb - ref.V_bar_dot / Vb
    ) + math.sqrt(Vb**2 - eta1**2) * (
        -kl * (p.C_L0 + p.C_Lalpha * a) + p.g * math.cos(ref.gamma_bar) / Vb + ref.gamma_bar_dot - eta2
    )
    ratio = p.C_mdelta_e / p.C_Ldelta_e
    km = p.rho_air * Vb * p.S * p.cbar / (2 * p.I_yy)
    eta2_dot = (
        km * ratio * (p.C_L0 + p.C_Lalpha * a)
        - p.m * p.g * p.cbar * ratio * math.cos(ref.gamma_bar) / (p.I_yy * Vb)
        - p.m * p.cbar * ratio * ref.gamma_bar_dot / p.I_yy
        - km * (p.C_m0 + p.C_malpha * a)
    )
    return np.array([eta1_dot, eta2_dot])


def zero_dynamics_equilibrium(p: AircraftParams, ref: ReferenceSignal) -> np.ndarray:
    """Root of :func:`zero_dynamics_rhs`.

    The second equation is affine in the angle ``asin(eta1 / V_bar)``, which
    fixes ``eta1``; the first then fixes ``eta2``.
    """
    Vb = ref.V_bar
    ratio = p.C_mdelta_e / p.C_Ldelta_e
    km = p.rho_air * Vb * p.S * p.cbar / (2 * p.I_yy)
    const = (
        km * (ratio * p.C_L0 - p.C_m0)
        - p.m * p.g * p.cbar * ratio * math.cos(ref.gamma_bar) / (p.I_yy * Vb)
        - p.m * p.cbar * ratio * ref.gamma_bar_dot / p.I_yy
    )
    slope = km * (ratio * p.C_Lalpha - p.C_malpha)
    a = -const / slope
    if abs(a) >= math.pi / 2:
        raise DomainError("internal equilibrium lies outside the arcsin range")
    eta1 = Vb * math.sin(a)
    kl = p.rho_air * Vb * p.S / (2 * p.m)
    drag_term = -kl * (p.C_D0 + p.C_Dalpha * a) - p.g * math.sin(ref.gamma_bar) / Vb - ref.V_bar_dot / Vb
    lift_term = -kl * (p.C_L0 + p.C_Lalpha * a) + p.g * math.cos(ref.gamma_bar) / Vb + ref.gamma_bar_dot
    eta2 = lift_term + eta1 * drag_term / math.sqrt(Vb**2 - eta1**2)
    return np.array([eta1, eta2])


def closed_form_two_output_control(
    p: AircraftParams, ref: ReferenceSignal, x: np.ndarray, K1: float, K2: float
) -> ControlInput:
    """Hand-expanded linearizing law with ``v = [-K1 x1, -K2 x2]``.

    Written out term by term so it can serve as an independent check on the
    generic pseudo-inverse route.
    """
    x1, x2, x3, _ = (float(v) for v in x)
    V = x1 + ref.V_bar
    a = x3 - x2 - ref.gamma_bar
    c = math.cos(a)
    if not V > 0:
        raise DomainError(f"x1 must exceed -V_bar (x1={x1})")
    if abs(c) < 1e-9:
        raise DomainError(f"cos(x3 - x2 - gamma_bar)={c:.3g} is singular")
    m, g, rho, S = p.m, p.g, p.rho_air, p.S
    cd = p.C_D0 + p.C_Dalpha * a
    cl = p.C_L0 + p.C_Lalpha * a
    sg = math.sin(x2 + ref.gamma_bar)
    cg = math.cos(x2 + ref.gamma_bar)
    tan_a = math.tan(a)
    denom2 = rho * V**2 * S * p.C_Ldelta_e
    denom1 = rho * V * S * p.C_Ldelta_e

    u1 = (
        rho * V**2 * S * cd / (2 * c)
        + m * g * sg / c
        + m * ref.V_bar_dot / c
        - m * K1 * x1 / c
    )
    u2 = (
        -tan_a * cd / p.C_Ldelta_e
        - 2 * m * g * tan_a * sg / denom2
        - 2 * m * tan_a * ref.V_bar_dot / denom2
        + 2 * m * tan_a * K1 * x1 / denom2
        - cl / p.C_Ldelta_e
        + 2 * m * g * cg / denom2
        + 2 * m * ref.gamma_bar_dot / denom1
        - 2 * m * K2 * x2 / denom1
    )
    return ControlInput(u1, u2)


def sample_states(
    rng: np.random.Generator,
    n: int,
    ref: ReferenceSignal,
    mode: str,
    dv: float = 60.0,
    dgamma: float = 0.2,
    alpha_range: tuple[float, float] = (-0.25, 0.35),
    dq: float = 0.1,
    min_speed: float = 80.0,
) -> np.ndarray:
    """Random admissible error states, well away from the singular surfaces."""
    lo = max(-dv, min_speed - ref.V_bar)
    x1 = rng.uniform(lo, dv, n)
    x2 = rng.uniform(-dgamma, dgamma, n)
    alpha = rng.uniform(*alpha_range, n)
    theta = alpha + x2 + ref.gamma_bar
    x3 = theta - (ref.theta_bar if mode == THREE_OUTPUT else 0.0)
    x4 = rng.uniform(-dq, dq, n)
    return np.column_stack([x1, x2, x3, x4])


def mode_from_name(name: Optional[str]) -> str:
    if name not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {name!r}")
    return name
