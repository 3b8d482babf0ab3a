"""Acceptance criteria, one test each, at the stated tolerances.

Every test records a PASS/FAIL line that is printed in the terminal summary.
"""

import math
import time

import numpy as np
import pytest

from folin import aircraft as ac
from folin.affine import RelativeDegreeProfile, ScalarField, check_jacobians, fd_jacobian, lie_f, lie_g, verify_relative_degree
from folin.iol import iol_control
from folin.sim import Scenario, local_peaks, rk4_step, run_incorrect_pitch_scenario, run_scenario, simulate_zero_dynamics
from folin.trim import solve_trim, trim_sweep

from conftest import ACCEPTANCE_LINES


def report(number, title, ok, detail):
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] {number}. {title}: {detail}")
    assert ok, detail


@pytest.fixture(scope="module")
def nominal(params):
    sc = Scenario(params, log_every=10)
    start = time.perf_counter()
    trace = run_scenario(sc)
    return trace, time.perf_counter() - start


@pytest.fixture(scope="module")
def biased(params):
    return run_incorrect_pitch_scenario(Scenario(params, log_every=100))


def test_1_relative_degrees(params, trim250):
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    ref2 = ac.ReferenceSignal(250.0)
    ref3 = ac.ReferenceSignal(250.0, 0.0, trim250.theta)
    r2 = verify_relative_degree(ac.build_two_output_system(params, ref2), [1, 1], ac.sample_states(rng, 50, ref2, ac.TWO_OUTPUT))
    r3 = verify_relative_degree(ac.build_three_output_system(params, ref3), [1, 1, 2], ac.sample_states(rng, 50, ref3, ac.THREE_OUTPUT))
    elapsed = time.perf_counter() - start
    ok = r2.passed and r3.passed and elapsed < 1.0
    report(1, "relative degrees", ok, f"two-output {r2.profile.rho} {r2.passed}, three-output {r3.profile.rho} {r3.passed}, {elapsed:.3f}s")


def test_2_controller_equivalence(params):
    rng = np.random.default_rng(2)
    ref = ac.ReferenceSignal(250.0)
    sys = ac.build_two_output_system(params, ref)
    prof = RelativeDegreeProfile((1, 1))
    K1, K2 = 0.5, 1.0
    start = time.perf_counter()
    worst = 0.0
    for x in ac.sample_states(rng, 100, ref, ac.TWO_OUTPUT):
        u = iol_control(sys, prof, x, np.array([-K1 * x[0], -K2 * x[1]]))
        cf = ac.closed_form_two_output_control(params, ref, x, K1, K2).as_array()
        worst = max(worst, float(np.max(np.abs(u - cf) / np.abs(cf))))
    elapsed = time.perf_counter() - start
    report(2, "controller equivalence", worst <= 1e-8 and elapsed < 1.0, f"max relative difference {worst:.2e}, {elapsed:.3f}s")


def test_3_projection_suite(nominal):
    trace, wall = nominal
    lam = trace.lam
    idem = float(np.max(trace.idempotence))
    tr_err = float(np.max(np.abs(lam.sum(axis=1) - 2.0)))
    pair = lam[:, 0] + lam[:, 1]
    pair_ok = bool(np.all((pair >= 0.99) & (pair <= 1.01)))
    switch = all(lam[:, i].min() < 0.1 and lam[:, i].max() > 0.9 for i in (0, 1))
    ok = idem <= 1e-8 and tr_err <= 1e-6 and pair_ok and switch and wall < 60.0 and not trace.failed
    detail = (
        f"||L^2-L|| max {idem:.1e}, |trace-2| max {tr_err:.1e}, "
        f"lam1+lam2 in [{pair.min():.4f}, {pair.max():.4f}], "
        f"lam1 range [{lam[:, 0].min():.4f}, {lam[:, 0].max():.4f}], lam2 range [{lam[:, 1].min():.4f}, {lam[:, 1].max():.4f}], "
        f"wall {wall:.1f}s"
    )
    report(3, "projection suite", ok, detail)


def test_4_velocity_step_convergence(nominal):
    trace, _ = nominal
    x = trace.x[-1]
    dV, dg, dth = abs(x[0]), abs(math.degrees(x[1])), abs(math.degrees(x[2]))
    monotone = {}
    for i, name in enumerate(("x1", "x2", "x3")):
        peaks = local_peaks(trace.t, trace.x[:, i], start=5.0)
        monotone[name] = bool(np.all(np.diff(peaks) <= 0))
    ok = trace.t[-1] == pytest.approx(120.0) and dV < 1.0 and dg < 0.05 and dth < 0.05 and all(monotone.values())
    report(
        4,
        "velocity-step convergence",
        ok,
        f"|V-250|={dV:.2e} m/s, |gamma|={dg:.2e} deg, |theta-thetabar|={dth:.2e} deg, envelopes non-increasing {monotone}",
    )


def test_5_zero_dynamics_instability(params):
    ref = ac.ReferenceSignal(250.0)
    eq = ac.zero_dynamics_equilibrium(params, ref)
    eig = np.linalg.eigvals(fd_jacobian(lambda e: ac.zero_dynamics_rhs(params, ref, e), eq))
    offset = np.array([1e-3, 0.0])
    zt = simulate_zero_dynamics(params, ref, eq + offset, dt=1e-3, horizon=120.0)
    dist = np.linalg.norm(zt.eta - eq, axis=1)
    hit = np.flatnonzero(dist > 10 * np.linalg.norm(offset))
    grew = hit.size > 0
    ok = bool(np.max(eig.real) > 0) and grew
    when = f"{zt.t[hit[0]]:.2f}s" if grew else "never"
    report(5, "zero-dynamics instability", ok, f"eta*=({eq[0]:.4f}, {eq[1]:.3e}), eigenvalues {np.round(eig.real, 4)}, 10x growth at {when}")


def test_6_trim(params):
    points = trim_sweep(params, np.arange(150.0, 300.0 + 1e-9, 10.0))
    worst = max(p.residual for p in points)
    iters = [solve_trim(params, p.V, initial_guess=p.unknowns).iterations for p in points]
    ok = worst < 1e-9 and max(iters) <= 2
    report(6, "trim", ok, f"{len(points)} points, max residual {worst:.2e}, re-solve iterations max {max(iters)}")


def test_7_diffeomorphism(params):
    rng = np.random.default_rng(7)
    ref = ac.ReferenceSignal(250.0)
    sys = ac.build_two_output_system(params, ref)
    states = ac.sample_states(rng, 1000, ref, ac.TWO_OUTPUT)
    fields = ac.internal_coordinates(params, ref)
    round_trip = 0.0
    lg = np.zeros((2, 2))
    for x in states:
        back = ac.diffeo_inverse(params, ref, ac.diffeo_forward(params, ref, x))
        round_trip = max(round_trip, float(np.max(np.abs(back - x) / np.maximum(1.0, np.abs(x)))))
        gx = sys.g(x)
        for j, phi in enumerate(fields):
            scale = np.linalg.norm(phi.grad(x)) * np.linalg.norm(gx, axis=0)
            lg[j] = np.maximum(lg[j], np.abs(lie_g(sys, phi, x)) / scale)
    ok = round_trip <= 1e-9 and lg.max() <= 1e-9
    report(
        7,
        "diffeomorphism",
        ok,
        f"round-trip max error {round_trip:.1e}; scaled max |L_g phi| eta1 {lg[0].round(12).tolist()}, eta2 {lg[1].round(12).tolist()}",
    )


def test_8_incorrect_pitch(nominal, biased):
    trace, _ = nominal
    g_nom = abs(trace.x[-1, 1])
    dV = abs(biased.x[-1, 0])
    g_bias = abs(biased.x[-1, 1])
    ok = dV < 1.0 and g_bias > 10 * g_nom and not biased.failed
    report(8, "incorrect pitch", ok, f"|V-250|={dV:.2e} m/s, |gamma(T)| biased {g_bias:.3e} rad vs nominal {g_nom:.3e} rad")


def test_9_numerics(params, trim250):
    def err(dt):
        x = np.array([1.0])
        for _ in range(int(round(1.0 / dt))):
            x = rk4_step(lambda z: -z, x, dt)
        return abs(x[0] - math.exp(-1.0))

    ratio = err(0.1) / err(0.05)
    rng = np.random.default_rng(9)
    ref = ac.ReferenceSignal(250.0, 0.0, trim250.theta)
    sys = ac.build_three_output_system(params, ref)
    states = ac.sample_states(rng, 100, ref, ac.THREE_OUTPUT)
    jac = check_jacobians(sys, states)
    eta1, _ = ac.internal_coordinates(params, ref)
    eta1_fd = ScalarField(eta1.func)
    worst = 0.0
    for x in states:
        fx = sys.f(x)
        pairs = [(float(eta1.grad(x) @ fx), lie_f(sys, eta1_fd, x))]
        jf = sys.jac_f(x)
        for i in (0, 1, 3):
            # L_f of the drift component: analytic Jacobian row vs central differences
            comp = ScalarField(lambda z, i=i: sys.f(z)[i])
            pairs.append((float(jf[i] @ fx), lie_f(sys, comp, x)))
        for analytic, fd in pairs:
            worst = max(worst, abs(fd - analytic) / max(abs(analytic), 1e-12))
    ok = 12.0 <= ratio <= 20.0 and jac <= 1e-5 and worst <= 1e-5
    report(9, "numerics", ok, f"RK4 error ratio {ratio:.2f}, Jacobian FD relative {jac:.1e}, Lie FD relative {worst:.1e}")
