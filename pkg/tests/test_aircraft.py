import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from folin import aircraft as ac
from folin.affine import RelativeDegreeProfile, lie_f, lie_g
from folin.errors import DomainError
from folin.iol import iol_control

P2 = RelativeDegreeProfile((1, 1))


def test_coefficients_example(params):
    c_l, c_d, c_m = ac.aero_coefficients(params, 0.1, -0.02)
    assert c_l == pytest.approx(params.C_L0 + 0.1 * params.C_Lalpha - 0.02 * params.C_Ldelta_e)
    assert c_d == pytest.approx(params.C_D0 + 0.1 * params.C_Dalpha)
    assert c_m == pytest.approx(params.C_m0 + 0.1 * params.C_malpha - 0.02 * params.C_mdelta_e)


def test_drag_ignores_elevator(params):
    assert ac.aero_coefficients(params, 0.05, 0.3)[1] == ac.aero_coefficients(params, 0.05, -0.3)[1]


def test_forces_scale_with_speed_squared(params):
    s1 = ac.FlightState(120.0, 0.01, 0.06, 0.0)
    s2 = ac.FlightState(240.0, 0.01, 0.06, 0.0)
    u = ac.ControlInput(1e5, 0.01)
    for a, b in zip(ac.forces_moment(params, s1, u), ac.forces_moment(params, s2, u)):
        assert b == pytest.approx(4 * a, rel=1e-12)


def test_forces_reject_nonpositive_speed(params):
    with pytest.raises(DomainError):
        ac.forces_moment(params, ac.FlightState(0.0, 0, 0, 0), ac.ControlInput(0, 0))


def test_pitch_kinematics(params):
    d = ac.dynamics_rhs(params, ac.FlightState(200.0, 0.02, 0.07, 0.0314), ac.ControlInput(1e5, 0.0))
    assert d[2] == 0.0314


def test_energy_conserved_without_drag_or_thrust():
    p = ac.load_default_params().replace(C_D0=0.0, C_Dalpha=0.0)
    rng = np.random.default_rng(3)
    for _ in range(20):
        s = ac.FlightState(rng.uniform(100, 300), rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(-0.1, 0.1))
        d = ac.dynamics_rhs(p, s, ac.ControlInput(0.0, rng.uniform(-0.1, 0.1)))
        # d/dt (V^2/2 + g h) with hdot = V sin(gamma)
        assert s.V * d[0] + p.g * s.V * math.sin(s.gamma) == pytest.approx(0.0, abs=1e-10)


def test_params_from_dict_strict(params):
    d = params.to_dict()
    assert ac.AircraftParams.from_dict(d) == params
    with pytest.raises(ValueError, match="unknown"):
        ac.AircraftParams.from_dict({**d, "wingspan": 60.0})
    d.pop("C_m0")
    with pytest.raises(ValueError, match="missing"):
        ac.AircraftParams.from_dict(d)


def test_params_reject_bad_values(params):
    with pytest.raises(ValueError):
        params.replace(m=-1.0)
    with pytest.raises(ValueError):
        params.replace(C_Ldelta_e=0.0)
    with pytest.raises(ValueError):
        params.replace(S=float("nan"))


def test_params_json_roundtrip(params, tmp_path):
    path = tmp_path / "p.json"
    path.write_text(json.dumps({"_note": "doc", **params.to_dict()}))
    assert ac.AircraftParams.from_json(path) == params


def test_error_coordinates_reproduce_physical_dynamics(params, trim250, rng):
    for mode, ref in (
        (ac.TWO_OUTPUT, ac.ReferenceSignal(250.0, 0.01)),
        (ac.THREE_OUTPUT, ac.ReferenceSignal(250.0, 0.01, trim250.theta)),
    ):
        sys = ac.build_system(params, ref, mode)
        for x in ac.sample_states(rng, 20, ref, mode):
            u = np.array([rng.uniform(0, 3e5), rng.uniform(-0.2, 0.2)])
            s = ac.to_flight_state(ref, x, mode)
            np.testing.assert_allclose(ac.to_error_state(ref, s, mode), x, atol=1e-12)
            phys = ac.dynamics_rhs_array(params, s, u)
            affine = sys.f(x) + sys.g(x) @ u
            np.testing.assert_allclose(affine[:3], phys[:3], rtol=1e-10, atol=1e-14)
            # the affine pitch row carries one factor of airspeed, the physical moment two
            assert affine[3] * s[0] == pytest.approx(phys[3], rel=1e-10, abs=1e-14)


def test_affine_model_is_at_rest_at_trim(params, trim250):
    for mode in ac.MODES:
        ref = ac.ReferenceSignal(250.0, 0.0, trim250.theta)
        sys = ac.build_system(params, ref, mode)
        x = ac.to_error_state(ref, trim250.state, mode)
        u = trim250.inputs.as_array()
        np.testing.assert_allclose(sys.f(x) + sys.g(x) @ u, 0.0, atol=1e-10)


def test_input_matrix_sparsity(sys3, ref3, rng):
    for x in ac.sample_states(rng, 10, ref3, ac.THREE_OUTPUT):
        g = sys3.g(x)
        assert g[0, 1] == 0.0 and g[2, 0] == 0.0 and g[2, 1] == 0.0 and g[3, 0] == 0.0


def test_square_gamma_determinant(sys2, params, ref2, rng):
    gam, _ = ac.closed_form_evaluators(params, ref2, ac.TWO_OUTPUT)
    for x in ac.sample_states(rng, 20, ref2, ac.TWO_OUTPUT):
        V = x[0] + ref2.V_bar
        a = x[2] - x[1] - ref2.gamma_bar
        det = math.cos(a) * params.rho_air * V * params.S * params.C_Ldelta_e / (2 * params.m**2)
        assert np.linalg.det(gam(x)) == pytest.approx(det, rel=1e-10)


def test_closed_form_control_matches_generic(params, rng):
    ref = ac.ReferenceSignal(240.0, 0.02)
    sys = ac.build_two_output_system(params, ref)
    K1, K2 = 0.5, 1.0
    for x in ac.sample_states(rng, 30, ref, ac.TWO_OUTPUT):
        u = iol_control(sys, P2, x, np.array([-K1 * x[0], -K2 * x[1]]))
        cf = ac.closed_form_two_output_control(params, ref, x, K1, K2).as_array()
        np.testing.assert_allclose(u, cf, rtol=1e-8, atol=1e-12 * abs(cf[0]))


def test_closed_form_domain_errors(params, ref2):
    with pytest.raises(DomainError):
        ac.closed_form_two_output_control(params, ref2, np.array([-260.0, 0, 0, 0]), 1, 1)
    with pytest.raises(DomainError):
        ac.closed_form_two_output_control(params, ref2, np.array([0.0, 0.0, math.pi / 2, 0]), 1, 1)


def test_admissible_region(sys2):
    assert sys2.is_admissible(np.zeros(4))
    assert not sys2.is_admissible(np.array([-300.0, 0, 0, 0]))
    assert not sys2.is_admissible(np.array([0.0, 0, 2.0, 0]))


def test_eta2_is_linear_combination(params, ref2):
    _, e2 = ac.internal_coordinates(params, ref2)
    x = np.array([3.0, 0.01, 0.05, 0.02])
    assert e2(x) == pytest.approx(ac.eta_gain(params) * 0.01 - 0.02)


def test_internal_coordinates_partial_annihilation(sys2, params, ref2, rng):
    # eta1 is blind to thrust and eta2 is blind to the elevator
    e1, e2 = ac.internal_coordinates(params, ref2)
    for x in ac.sample_states(rng, 20, ref2, ac.TWO_OUTPUT):
        scale1 = np.linalg.norm(e1.grad(x)) * np.linalg.norm(sys2.g(x)[:, 0])
        scale2 = np.linalg.norm(e2.grad(x)) * np.linalg.norm(sys2.g(x)[:, 1])
        assert abs(lie_g(sys2, e1, x)[0]) <= 1e-12 * scale1
        assert abs(lie_g(sys2, e2, x)[1]) <= 1e-12 * scale2


@settings(max_examples=200, deadline=None)
@given(
    dv=st.floats(-150, 150),
    dg=st.floats(-0.3, 0.3),
    alpha=st.floats(-1.4, 1.4),
    q=st.floats(-0.5, 0.5),
)
def test_diffeo_round_trip(dv, dg, alpha, q):
    p = ac.load_default_params()
    ref = ac.ReferenceSignal(250.0, 0.02)
    x = np.array([dv, dg, alpha + dg + 0.02, q])
    back = ac.diffeo_inverse(p, ref, ac.diffeo_forward(p, ref, x))
    np.testing.assert_allclose(back, x, rtol=1e-9, atol=1e-9)


def test_diffeo_inverse_domain_error_names_values(params, ref2):
    t = ac.TransformedState(np.array([-50.0, 0.0]), np.array([201.0, 0.0]))
    with pytest.raises(DomainError, match="xi1=-50"):
        ac.diffeo_inverse(params, ref2, t)
    with pytest.raises(DomainError):
        ac.diffeo_inverse(params, ref2, ac.TransformedState(np.array([-251.0, 0.0]), np.zeros(2)))


def test_zero_dynamics_is_drift_of_internal_coordinates(sys2, params, ref2):
    e1, e2 = ac.internal_coordinates(params, ref2)
    eq = ac.zero_dynamics_equilibrium(params, ref2)
    for d in ([0.0, 0.0], [0.5, 1e-3], [-2.0, -3e-3], [10.0, 0.01]):
        eta = eq + np.array(d)
        x = ac.diffeo_inverse(params, ref2, ac.TransformedState(np.zeros(2), eta))
        expected = [lie_f(sys2, e1, x), lie_f(sys2, e2, x)]
        np.testing.assert_allclose(ac.zero_dynamics_rhs(params, ref2, eta), expected, rtol=1e-9, atol=1e-12)


def test_zero_dynamics_equilibrium_is_root(params):
    for ref in (ac.ReferenceSignal(250.0), ac.ReferenceSignal(200.0, 0.03)):
        eq = ac.zero_dynamics_equilibrium(params, ref)
        res = ac.zero_dynamics_rhs(params, ref, eq)
        assert np.max(np.abs(res)) < 1e-12


def test_zero_dynamics_domain(params, ref2):
    with pytest.raises(DomainError):
        ac.zero_dynamics_rhs(params, ref2, [251.0, 0.0])


def test_sample_states_admissible(sys3, ref3, rng):
    xs = ac.sample_states(rng, 200, ref3, ac.THREE_OUTPUT)
    assert all(sys3.is_admissible(x) for x in xs)


def test_mode_names():
    assert ac.mode_from_name("two-output") == ac.TWO_OUTPUT
    with pytest.raises(ValueError):
        ac.mode_from_name("four-output")
