"""Equilibrium (trim) solving for level and climbing flight."""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .aircraft import AircraftParams, ControlInput, FlightState, ReferenceSignal, dynamics_rhs
from .errors import SolverError

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-9
CSV_HEADER = ("V", "gamma", "theta", "F", "delta_e", "residual")


@dataclass(frozen=True)
class TrimPoint:
    V: float
    gamma: float
    theta: float
    F: float
    delta_e: float
    residual: float
    iterations: int = 0

    @property
    def alpha(self) -> float:
        return self.theta - self.gamma

    @property
    def state(self) -> FlightState:
        return FlightState(self.V, self.gamma, self.theta, 0.0)

    @property
    def inputs(self) -> ControlInput:
        return ControlInput(self.F, self.delta_e)

    @property
    def unknowns(self) -> np.ndarray:
        return np.array([self.theta, self.F, self.delta_e])


def default_guess(p: AircraftParams) -> np.ndarray:
    return np.array([0.03, 0.05 * p.m * p.g, 0.0])


def _derivatives(p, V, gamma, z):
    return dynamics_rhs(p, FlightState(V, gamma, z[0], 0.0), ControlInput(z[1], z[2]))


def _scaled_residual(p, V, gamma, z):
    # thetadot = q = 0 holds identically; keep Vdot, gammadot, qdot
    d = _derivatives(p, V, gamma, z)
    q_ref = 0.5 * p.rho_air * V**2 * p.S * p.cbar / p.I_yy
    return np.array([d[0] / p.g, d[1] * V / p.g, d[3] / q_ref])


def solve_trim(
    p: AircraftParams,
    V: float,
    gamma: float = 0.0,
    initial_guess: Optional[Sequence[float]] = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = 50,
) -> TrimPoint:
    """Damped Newton on ``(theta, F, delta_e)`` zeroing ``(Vdot, gammadot, qdot)`` at ``q = 0``.

    ``tol`` bounds the max-norm of the raw state derivatives.
    """
    if not V > 0:
        raise ValueError(f"airspeed must be positive, got {V}")
    z = default_guess(p) if initial_guess is None else np.array(initial_guess, dtype=float)
    scale = np.array([1e-6, 1e-6 * p.m * p.g, 1e-6])

    def raw(z):
        return float(np.max(np.abs(_derivatives(p, V, gamma, z))))

    res = _scaled_residual(p, V, gamma, z)
    it = 0
    # aim well below tol, but accept anything under tol once progress stalls
    target = tol * 1e-3
    best = raw(z)
    while best >= target:
        if it >= max_iter:
            if best < tol:
                break
            raise SolverError(f"trim at V={V} did not converge; residual {best:.3e}", residual=best)
        jac = np.empty((3, 3))
        for j in range(3):
            dz = np.zeros(3)
            dz[j] = scale[j] * max(1.0, abs(z[j]) / (1.0 if j != 1 else p.m * p.g))
            jac[:, j] = (_scaled_residual(p, V, gamma, z + dz) - _scaled_residual(p, V, gamma, z - dz)) / (2 * dz[j])
        step = np.linalg.solve(jac, -res)
        norm0 = np.linalg.norm(res)
        lam = 1.0
        while True:
            trial = z + lam * step
            trial_res = _scaled_residual(p, V, gamma, trial)
            if np.all(np.isfinite(trial_res)) and np.linalg.norm(trial_res) < norm0 or lam < 1e-4:
                break
            lam *= 0.5
        it += 1
        trial_raw = raw(trial)
        if not trial_raw < best:
            if best < tol:
                break
            if not np.isfinite(trial_raw):
                raise SolverError(f"trim at V={V} produced non-finite residuals", residual=best)
        z, res = trial, trial_res
        best = min(best, trial_raw)

    point = TrimPoint(V, gamma, float(z[0]), float(z[1]), float(z[2]), raw(z), it)
    if point.F < 0:
        warnings.warn(f"trim at V={V} needs negative thrust F={point.F:.4g}", RuntimeWarning, stacklevel=2)
    log.debug("trim V=%g: theta=%.6g F=%.6g delta_e=%.6g (%d iterations)", V, point.theta, point.F, point.delta_e, it)
    return point


def trim_sweep(p: AircraftParams, V_list: Sequence[float], gamma: float = 0.0, tol: float = DEFAULT_TOL) -> list[TrimPoint]:
    """Warm-started continuation over an ascending airspeed list."""
    V_list = [float(v) for v in V_list]
    if not V_list:
        raise ValueError("airspeed list is empty")
    if any(b <= a for a, b in zip(V_list, V_list[1:])):
        raise ValueError("airspeed list must be strictly ascending")
    points: list[TrimPoint] = []
    guess = None
    for idx, V in enumerate(V_list):
        try:
            pt = solve_trim(p, V, gamma, guess, tol=tol)
        except SolverError as exc:
            raise SolverError(f"trim sweep failed at index {idx} (V={V}): {exc}", exc.residual, idx) from exc
        points.append(pt)
        guess = pt.unknowns
    return points


def write_trim_csv(points: Sequence[TrimPoint], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for pt in points:
            w.writerow([repr(float(getattr(pt, k))) for k in CSV_HEADER])


def trim_reference(point: TrimPoint) -> ReferenceSignal:
    """Reference signal holding the aircraft at a trim point."""
    return ReferenceSignal(V_bar=point.V, gamma_bar=point.gamma, theta_bar=point.theta)

