"""Fixed-step closed-loop simulation and trace logging."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from . import aircraft as ac
from .affine import AffineSystem, RelativeDegreeProfile
from .errors import DomainError, IntegrationError
from .iol import ChainGains, LinearizingController, companion_matrices
from .trim import TrimPoint, solve_trim

TRACE_HEADER = (
    "t,V,gamma,theta,q,x1,x2,x3,x4,F,delta_e,v1,v2,v3,lam1,lam2,lam3,offdiag,Vref,gammaref,thetaref"
).split(",")

DEFAULT_GAINS = (-0.5, -1.0, -5.0, -3.0)


def rk4_step(rhs: Callable[[np.ndarray], np.ndarray], x: np.ndarray, dt: float, k1: Optional[np.ndarray] = None) -> np.ndarray:
    """Classical fourth-order Runge-Kutta step for an autonomous field.

    ``k1`` may be passed when the slope at ``x`` is already known.
    """
    x = np.asarray(x, dtype=float)
    if k1 is None:
        k1 = rhs(x)
    k2 = rhs(x + 0.5 * dt * k1)
    k3 = rhs(x + 0.5 * dt * k2)
    k4 = rhs(x + dt * k3)
    x_next = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    # NaN/inf in any stage propagates into x_next
    if not math.isfinite(x_next.sum()):
        raise IntegrationError("non-finite value in RK4 step")
    return x_next


@dataclass(frozen=True)
class SimConfig:
    """Integration settings for one closed-loop run.

    ``x0`` is in the system's own (error) coordinates.
    """

    x0: tuple[float, ...]
    dt: float = 1e-3
    horizon: float = 120.0
    log_every: int = 1
    scenario: str = "custom"

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.horizon >= self.dt:
            raise ValueError("horizon must be at least one step")
        if int(self.log_every) < 1:
            raise ValueError("log_every must be >= 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))


def check_step_guard(gains: ChainGains, profile: RelativeDegreeProfile, dt: float, limit: float = 0.1) -> float:
    """``dt * max|eig|`` of the linear design; raises when it reaches ``limit``."""
    comp = companion_matrices(profile)
    eig = np.linalg.eigvals(comp.A + comp.B @ gains.matrix)
    value = dt * float(np.max(np.abs(eig)))
    if value >= limit:
        raise ValueError(f"dt={dt} too large for the gains: dt*max|eig|={value:.3g} >= {limit}")
    return value


@dataclass
class SimTrace:
    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    v: np.ndarray
    lam: np.ndarray
    offdiag: np.ndarray
    idempotence: np.ndarray
    asymmetry: np.ndarray
    rank: np.ndarray
    singular: np.ndarray
    state: Optional[np.ndarray] = None
    reference: Optional[np.ndarray] = None
    failed: bool = False
    fail_time: Optional[float] = None
    message: str = ""
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return self.t.size

    def to_csv(self, path) -> None:
        if self.state is None or self.reference is None:
            raise ValueError("trace has no physical state/reference rows to export")
        n = len(self)
        pad_v = np.full((n, 3), np.nan)
        pad_v[:, : self.v.shape[1]] = self.v
        pad_l = np.full((n, 3), np.nan)
        pad_l[:, : self.lam.shape[1]] = self.lam
        cols = np.column_stack([self.t, self.state, self.x, self.u, pad_v, pad_l, self.offdiag, self.reference])
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_HEADER)
            for row in cols:
                w.writerow(["" if math.isnan(v) else repr(float(v)) for v in row])


def simulate_closed_loop(sys: AffineSystem, ctrl: LinearizingController, cfg: SimConfig) -> SimTrace:
    """Step the plant under ``u = alpha + gamma^+ v`` with RK4.

    The controller is evaluated at every RK4 stage. A non-finite state ends
    the run early and the partial trace carries ``failed=True``.
    """
    if ctrl.gains is None:
        raise ValueError("controller needs outer-loop gains")
    x = np.asarray(cfg.x0, dtype=float)
    if x.shape != (sys.n_state,):
        raise ValueError(f"initial state has shape {x.shape}, expected ({sys.n_state},)")
    if not sys.is_admissible(x):
        raise DomainError("initial state is outside the admissible region")

    def closed_loop(z):
        return sys.f(z) + sys.g(z) @ ctrl.control(z)

    n_steps = cfg.n_steps
    n_log = n_steps // cfg.log_every + 1
    ly = sys.n_output
    out = dict(
        t=np.full(n_log, np.nan),
        x=np.full((n_log, sys.n_state), np.nan),
        u=np.full((n_log, sys.n_input), np.nan),
        v=np.full((n_log, ly), np.nan),
        lam=np.full((n_log, ly), np.nan),
        offdiag=np.full(n_log, np.nan),
        idempotence=np.full(n_log, np.nan),
        asymmetry=np.full(n_log, np.nan),
        rank=np.zeros(n_log, dtype=int),
        singular=np.zeros(n_log, dtype=bool),
    )
    failed, fail_time, message = False, None, ""
    row = 0
    for k in range(n_steps + 1):
        t = k * cfg.dt
        try:
            v = ctrl.command(x)
            u, snap = ctrl.control_and_projection(x, v, t)
            k1 = sys.f(x) + sys.g(x) @ u
            if not math.isfinite(k1.sum() + u.sum()):
                raise IntegrationError("non-finite closed-loop derivative", t)
        except (IntegrationError, ValueError, ArithmeticError) as exc:
            failed, fail_time, message = True, t, str(exc)
            break
        if k % cfg.log_every == 0:
            lam = snap.matrix
            out["t"][row] = t
            out["x"][row] = x
            out["u"][row] = u
            out["v"][row] = v
            out["lam"][row] = snap.diagonal
            out["offdiag"][row] = snap.offdiag_mass
            out["idempotence"][row] = np.linalg.norm(lam @ lam - lam)
            out["asymmetry"][row] = np.linalg.norm(lam - lam.T)
            out["rank"][row] = snap.rank
            out["singular"][row] = sys.singularity is not None and sys.singularity(x) is not None
            row += 1
        if k == n_steps:
            break
        try:
            x = rk4_step(closed_loop, x, cfg.dt, k1=k1)
        except (IntegrationError, ValueError, ArithmeticError) as exc:
            failed, fail_time, message = True, t, str(exc)
            break
    trimmed = {key: val[:row] for key, val in out.items()}
    return SimTrace(**trimmed, failed=failed, fail_time=fail_time, message=message, meta={"scenario": cfg.scenario})


@dataclass(frozen=True)
class ZeroDynamicsTrace:
    t: np.ndarray
    eta: np.ndarray
    diverged: bool
    stop_time: Optional[float]


def simulate_zero_dynamics(
    p: ac.AircraftParams, ref: ac.ReferenceSignal, eta0: Sequence[float], dt: float = 1e-3, horizon: float = 120.0
) -> ZeroDynamicsTrace:
    """Integrate the internal dynamics; leaving the arcsin domain marks divergence."""
    eta = np.asarray(eta0, dtype=float)
    if abs(eta[0]) >= ref.V_bar:
        raise DomainError(f"|eta1(0)|={abs(eta[0])} must be below V_bar={ref.V_bar}")
    n = int(round(horizon / dt))
    ts, etas = [0.0], [eta.copy()]
    diverged, stop = False, None
    for k in range(n):
        try:
            eta = rk4_step(lambda e: ac.zero_dynamics_rhs(p, ref, e), eta, dt)
        except (DomainError, IntegrationError):
            diverged, stop = True, k * dt
            break
        if abs(eta[0]) >= ref.V_bar:
            diverged, stop = True, (k + 1) * dt
            break
        ts.append((k + 1) * dt)
        etas.append(eta.copy())
    return ZeroDynamicsTrace(np.array(ts), np.array(etas), diverged, stop)


@dataclass(frozen=True)
class Scenario:
    """Aircraft velocity-change scenario: trim at ``V0``, command ``V_cmd``."""

    params: ac.AircraftParams
    mode: str = ac.THREE_OUTPUT
    V0: float = 200.0
    V_cmd: float = 250.0
    gains: tuple[float, ...] = DEFAULT_GAINS
    pitch_bias: float = 0.0
    dt: float = 1e-3
    horizon: float = 120.0
    pinv_tol: float = 1e-12
    log_every: int = 1
    name: str = "nominal"

    def __post_init__(self):
        ac.mode_from_name(self.mode)
        if not (self.V0 > 0 and self.V_cmd > 0):
            raise ValueError("V0 and V_cmd must be positive")
        expected = 4 if self.mode == ac.THREE_OUTPUT else 2
        if len(self.gains) not in (expected, 4):
            raise ValueError(f"{self.mode} needs {expected} gains, got {len(self.gains)}")
        if any(not k < 0 for k in self.gains):
            raise ValueError("all gains must be negative")

    def replace(self, **changes) -> "Scenario":
        return replace(self, **changes)


@dataclass(frozen=True)
class ScenarioSetup:
    system: AffineSystem
    controller: LinearizingController
    config: SimConfig
    reference: ac.ReferenceSignal
    trim_start: TrimPoint
    trim_target: TrimPoint


def scenario_gains(sc: Scenario) -> ChainGains:
    if sc.mode == ac.THREE_OUTPUT:
        return ChainGains.from_flat(sc.gains, (1, 1, 2))
    return ChainGains.from_flat(sc.gains[:2], (1, 1))


def setup_scenario(sc: Scenario) -> ScenarioSetup:
    trim0 = solve_trim(sc.params, sc.V0)
    trim1 = trim0 if sc.V_cmd == sc.V0 else solve_trim(sc.params, sc.V_cmd, initial_guess=trim0.unknowns)
    ref = ac.ReferenceSignal(V_bar=trim1.V, gamma_bar=trim1.gamma, theta_bar=trim1.theta + sc.pitch_bias)
    system = ac.build_system(sc.params, ref, sc.mode)
    profile = RelativeDegreeProfile((1, 1, 2) if sc.mode == ac.THREE_OUTPUT else (1, 1))
    gains = scenario_gains(sc)
    check_step_guard(gains, profile, sc.dt)
    gam, lf = ac.closed_form_evaluators(sc.params, ref, sc.mode)
    ctrl = LinearizingController(system, profile, gains, sc.pinv_tol, psi=_psi_for(sc.mode), gamma=gam, lf_rho=lf)
    x0 = ac.to_error_state(ref, trim0.state, sc.mode)
    cfg = SimConfig(tuple(x0), sc.dt, sc.horizon, sc.log_every, sc.name)
    return ScenarioSetup(system, ctrl, cfg, ref, trim0, trim1)


def _psi_for(mode):
    # psi is the identity in the three-output mode and picks (x1, x2) otherwise
    if mode == ac.THREE_OUTPUT:
        return lambda x: np.asarray(x, dtype=float)
    return lambda x: np.asarray(x, dtype=float)[:2]


def run_scenario(sc: Scenario) -> SimTrace:
    setup = setup_scenario(sc)
    trace = simulate_closed_loop(setup.system, setup.controller, setup.config)
    ref = setup.reference
    trace.state = np.array([ac.to_flight_state(ref, x, sc.mode) for x in trace.x]).reshape(-1, 4)
    trace.reference = np.tile([ref.V_bar, ref.gamma_bar, ref.theta_bar], (len(trace), 1))
    trace.meta.update(
        mode=sc.mode,
        theta_trim=setup.trim_target.theta,
        theta_ref=ref.theta_bar,
        trim_start=setup.trim_start,
        trim_target=setup.trim_target,
    )
    return trace


def run_incorrect_pitch_scenario(sc: Scenario, bias: float = math.radians(0.5)) -> SimTrace:
    """Nominal scenario with the pitch reference offset from the true trim pitch."""
    return run_scenario(sc.replace(pitch_bias=bias, name=f"{sc.name}-pitch-bias"))


def settling_time(t: np.ndarray, e: np.ndarray, fraction: float = 0.02) -> float:
    """Last time ``|e|`` exceeds ``fraction`` of its peak; 0 when never above."""
    mag = np.abs(np.asarray(e, dtype=float))
    peak = float(np.max(mag)) if mag.size else 0.0
    if peak == 0.0:
        return 0.0
    above = np.flatnonzero(mag > fraction * peak)
    if above.size == 0:
        return 0.0
    i = above[-1]
    return float(t[min(i + 1, t.size - 1)])


def window_peaks(t: np.ndarray, e: np.ndarray, start: float = 5.0, width: float = 5.0) -> np.ndarray:
    """Peak ``|e|`` over consecutive windows beginning at ``start``."""
    mag = np.abs(np.asarray(e, dtype=float))
    edges = np.arange(start, t[-1] + 1e-12, width)
    peaks = []
    for lo in edges:
        sel = (t >= lo) & (t < lo + width)
        if sel.any():
            peaks.append(float(mag[sel].max()))
    return np.array(peaks)


def local_peaks(t: np.ndarray, e: np.ndarray, start: float = 5.0, floor: float = 1e-9) -> np.ndarray:
    """Successive local maxima of ``|e|`` after ``start``, ignoring those below ``floor``."""
    t = np.asarray(t, dtype=float)
    mag = np.abs(np.asarray(e, dtype=float))
    inner = (mag[1:-1] > mag[:-2]) & (mag[1:-1] >= mag[2:])
    idx = np.flatnonzero(inner) + 1
    idx = idx[(t[idx] >= start) & (mag[idx] > floor)]
    return mag[idx]
