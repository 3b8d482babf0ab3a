import csv

import numpy as np
import pytest

from folin import aircraft as ac
from folin.errors import SolverError
from folin.trim import CSV_HEADER, solve_trim, trim_reference, trim_sweep, write_trim_csv


def test_trim_residual(params, trim250):
    d = ac.dynamics_rhs(params, trim250.state, trim250.inputs)
    assert np.max(np.abs(d)) < 1e-9
    assert trim250.residual < 1e-9


def test_trim_lift_balance(params, trim250):
    lift, _, _ = ac.forces_moment(params, trim250.state, trim250.inputs)
    expected = params.m * params.g * np.cos(trim250.gamma) - trim250.F * np.sin(trim250.alpha)
    assert lift == pytest.approx(expected, rel=1e-10)


def test_trim_moment_free(params, trim250):
    _, _, c_m = ac.aero_coefficients(params, trim250.alpha, trim250.delta_e)
    assert abs(c_m) < 1e-12


def test_zero_moment_intercept_degenerate_case():
    # alpha = 0 trims when lift intercept carries the weight and drag is absorbed by thrust
    p = ac.load_default_params()
    V = 250.0
    qs = 0.5 * p.rho_air * V**2 * p.S
    p = p.replace(C_L0=p.m * p.g / qs + p.C_Ldelta_e * p.C_m0 / p.C_mdelta_e)
    pt = solve_trim(p, V)
    assert pt.alpha == pytest.approx(0.0, abs=1e-9)
    assert pt.delta_e == pytest.approx(-p.C_m0 / p.C_mdelta_e, rel=1e-9)
    assert pt.F == pytest.approx(qs * p.C_D0, rel=1e-9)


def test_climb_trim(params):
    pt = solve_trim(params, 220.0, gamma=0.03)
    assert pt.residual < 1e-9
    assert pt.gamma == 0.03
    level = solve_trim(params, 220.0)
    assert pt.F > level.F


def test_resolve_from_solution_is_immediate(params, trim250):
    again = solve_trim(params, 250.0, initial_guess=trim250.unknowns)
    assert again.iterations <= 2
    assert again.residual < 1e-9


def test_sweep_thrust_increases_with_speed(params):
    pts = trim_sweep(params, np.arange(150.0, 301.0, 10.0))
    F = np.array([p.F for p in pts])
    assert np.all(np.diff(F) > 0)
    assert max(p.residual for p in pts) < 1e-9


def test_sweep_requires_ascending(params):
    with pytest.raises(ValueError):
        trim_sweep(params, [200.0, 190.0])
    with pytest.raises(ValueError):
        trim_sweep(params, [])


def test_solver_error_reports_index(params):
    # a zero tolerance is unreachable in floating point
    with pytest.raises(SolverError) as info:
        trim_sweep(params, [200.0, 210.0], tol=0.0)
    assert info.value.index == 0
    assert "index 0" in str(info.value)


def test_invalid_speed(params):
    with pytest.raises(ValueError):
        solve_trim(params, 0.0)


def test_trim_reference(trim250):
    ref = trim_reference(trim250)
    assert (ref.V_bar, ref.gamma_bar, ref.theta_bar) == (250.0, 0.0, trim250.theta)


def test_csv_round_trip(params, tmp_path):
    pts = trim_sweep(params, [180.0, 200.0])
    path = tmp_path / "trim.csv"
    write_trim_csv(pts, path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == CSV_HEADER
    assert len(rows) == 3
    assert float(rows[2][3]) == pts[1].F
