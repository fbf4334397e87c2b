import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from impulsive_geodesics import manifold
from impulsive_geodesics.dynamics import (GeodesicState, IntegratorConfig, existence_interval_alpha,
                                          integrate, rhs, v_by_quadrature, verify_lemma_bounds)
from impulsive_geodesics.errors import ChartExitError, DomainError, ParameterError
from impulsive_geodesics.impulse import net, profile

E1 = manifold.builtin("euclidean:1")
E2 = manifold.builtin("euclidean:2")
SPHERE = manifold.builtin("sphere")
BUMP = net("bump")
QUAD = profile("x^2 - y^2", E2)
FLAT_DATA = (0.0, 0.0, np.array([1.0, 0.0]), np.array([0.0, 0.0]))
CROSSING = (0.0, 0.0, np.array([0.0, 0.0]), np.array([1.0, 0.0]))
SPHERE_DATA = (0.0, 0.0, np.array([math.pi / 2, -1.0]), np.array([0.0, 1.0]))


def test_rhs_inside_pulse():
    eps = 0.1
    s = GeodesicState(0.0, 0.0, 0.0, np.array([1.0, 0.0]), np.array([0.0, 0.0]))
    d = rhs(E2, QUAD, BUMP, eps, s)
    D0 = BUMP.delta(eps, 0.0)
    np.testing.assert_allclose(d.dxdot, [D0, 0.0], rtol=1e-14)
    assert d.dp == 0.0
    np.testing.assert_array_equal(d.dx, [0.0, 0.0])
    # v' = p - f delta / 2 with p = 0 and f = 1
    assert d.dv == pytest.approx(-0.5 * D0)


@pytest.mark.parametrize("u", [-0.5, -0.1, 0.1, 0.7])
def test_rhs_off_pulse_is_background(u):
    x, xd = np.array([1.1, 0.4]), np.array([0.2, -0.3])
    s = GeodesicState(u, 0.3, 0.7, x, xd)
    d = rhs(SPHERE, profile("cos(theta)", SPHERE), BUMP, 0.1, s)
    expected = -np.einsum("kij,i,j->k", SPHERE.christoffel(x), xd, xd)
    np.testing.assert_allclose(d.dxdot, expected, rtol=1e-14)
    assert d.dp == 0.0 and d.dv == 0.7


def test_rhs_zero_profile():
    s = GeodesicState(0.0, 0.0, 1.0, np.array([1.0, 0.5]), np.array([0.3, 0.1]))
    d = rhs(E2, profile("0", E2), BUMP, 0.01, s)
    assert d.dp == 0.0 and d.dv == 1.0
    np.testing.assert_array_equal(d.dxdot, [0.0, 0.0])


def test_rhs_rejects_bad_input():
    s = GeodesicState(0.0, 0.0, 0.0, np.array([0.0, 0.0]), np.array([1.0, 0.0]))
    with pytest.raises(ParameterError):
        rhs(E2, QUAD, BUMP, 0.0, s)
    bad = GeodesicState(0.0, 0.0, 0.0, np.array([0.0, 0.0]), np.array([1.0, 0.0]))
    with pytest.raises(DomainError):
        rhs(SPHERE, profile("1", SPHERE), BUMP, 0.1, bad)


def test_state_pack_roundtrip():
    s = GeodesicState(0.25, 1.0, 2.0, np.array([3.0, 4.0]), np.array([5.0, 6.0]))
    t = GeodesicState.unpack(0.25, s.pack())
    assert t.v == 1.0 and t.p == 2.0
    np.testing.assert_array_equal(t.x, s.x)
    np.testing.assert_array_equal(t.xdot, s.xdot)


def test_free_flat_motion():
    traj = integrate(E2, profile("0", E2), BUMP, 1e-2, (0.0, 1.0, np.zeros(2), np.array([1.0, 0.0])), 2.0)
    u = np.linspace(-1.0, 2.0, 31)
    np.testing.assert_allclose(traj.v(u), u + 1.0, atol=1e-12)
    np.testing.assert_allclose(traj.x(u), np.column_stack([u + 1.0, 0.0 * u]), atol=1e-12)


def test_linear_profile_kink():
    traj = integrate(E1, profile("2*x", E1), BUMP, 1e-2, (0.0, 0.0, np.zeros(1), np.zeros(1)), 1.0)
    assert traj.xdot(1.0)[0] == pytest.approx(1.0, abs=1e-2)
    assert traj.x(1.0)[0] == pytest.approx(1.0, abs=1e-2)


def test_flat_quadratic_endpoint():
    traj = integrate(E2, QUAD, BUMP, 1e-3, FLAT_DATA, 1.0)
    np.testing.assert_allclose(traj.x(1.0), [2.0, 0.0], atol=5e-3)


def _raw_reference(eps, u_end=1.0):
    """Independent scipy solve of the v'' form for the flat quadratic scenario."""
    def fun(u, y):
        D, dD = BUMP.delta(eps, u), BUMP.ddelta(eps, u)
        x, xd = y[2:4], y[4:6]
        grad = np.array([2 * x[0], -2 * x[1]])
        fval = x[0] ** 2 - x[1] ** 2
        vdd = -D * grad @ xd - 0.5 * fval * dD
        return np.concatenate([[y[1], vdd], xd, 0.5 * D * grad])

    y0 = np.array([0.0, 0.0, 1.0, 0.0, 0.0, 0.0])
    pieces = [(-1.0, -eps), (-eps, eps), (eps, u_end)]
    for a, b in pieces:
        sol = solve_ivp(fun, (a, b), y0, method="DOP853", rtol=1e-12, atol=1e-14,
                        max_step=eps / 16 if a == -eps else np.inf)
        y0 = sol.y[:, -1]
    return y0


@pytest.mark.parametrize("eps", [1e-1, 1e-2])
def test_against_scipy_raw_form(eps):
    ref = _raw_reference(eps)
    traj = integrate(E2, QUAD, BUMP, eps, FLAT_DATA, 1.0)
    assert traj.v(1.0) == pytest.approx(ref[0], abs=1e-6)
    np.testing.assert_allclose(traj.x(1.0), ref[2:4], atol=1e-7)
    assert traj.vdot(1.0) == pytest.approx(ref[1], abs=1e-6)


@pytest.mark.parametrize("eps", [1e-1, 1e-2])
def test_p_form_matches_raw_form(eps):
    cfg = IntegratorConfig()
    u = np.linspace(-1.0, 1.0, 201)
    p = integrate(E2, QUAD, BUMP, eps, FLAT_DATA, 1.0, cfg)
    raw = integrate(E2, QUAD, BUMP, eps, FLAT_DATA, 1.0, cfg, form="raw")
    p_ref = integrate(E2, QUAD, BUMP, eps, FLAT_DATA, 1.0, cfg.refined(1e-2))
    raw_ref = integrate(E2, QUAD, BUMP, eps, FLAT_DATA, 1.0, cfg.refined(1e-2), form="raw")
    global_err = np.max(np.abs(p.v(u) - p_ref.v(u))) + np.max(np.abs(raw.v(u) - raw_ref.v(u)))
    assert np.max(np.abs(p.v(u) - raw.v(u))) <= 10 * global_err
    np.testing.assert_allclose(p.vdot(u), raw.vdot(u), atol=1e-5)


def test_off_impulse_matches_background():
    eps = 1e-2
    f = profile("cos(theta)", SPHERE)
    traj = integrate(SPHERE, f, BUMP, eps, SPHERE_DATA, 1.0)
    bg = manifold.background_geodesic(SPHERE, SPHERE_DATA[2], SPHERE_DATA[3], -1.0, -eps)
    u = np.linspace(-1.0, -eps, 50)
    assert np.max(np.abs(traj.x(u) - bg.at(u)[0])) <= 10 * IntegratorConfig().rel_tol


@pytest.mark.parametrize("eps", [1e-1, 1e-2, 1e-3])
def test_v_by_quadrature(eps):
    traj = integrate(E2, QUAD, BUMP, eps, CROSSING, 1.0)
    for u in (-0.5, 0.0, 0.5 * eps, 1.0):
        assert v_by_quadrature(traj, u) == pytest.approx(float(traj.v(u)), abs=10 * IntegratorConfig().rel_tol)


def test_tolerance_refinement():
    coarse = IntegratorConfig(rel_tol=1e-6, abs_tol=1e-8)
    fine = IntegratorConfig(rel_tol=5e-7, abs_tol=5e-9)
    a = integrate(E2, QUAD, BUMP, 1e-2, FLAT_DATA, 1.0, coarse).state(1.0)
    b = integrate(E2, QUAD, BUMP, 1e-2, FLAT_DATA, 1.0, fine).state(1.0)
    # global error estimate of the coarse run: tolerance times the length of the run
    assert np.max(np.abs(a - b)) <= 2.0 * (coarse.rel_tol * np.max(np.abs(b)) + coarse.abs_tol)


def test_mesh_hits_pulse_edges_and_respects_cap():
    eps = 1e-3
    traj = integrate(E2, QUAD, BUMP, eps, FLAT_DATA, 1.0)
    assert -eps in traj.u and eps in traj.u
    inside = traj.u[(traj.u >= -eps) & (traj.u <= eps)]
    assert np.max(np.diff(inside)) <= eps / 16 + 1e-15
    assert np.all(np.diff(traj.u) > 0)


def test_backward_extension():
    traj = integrate(E2, QUAD, BUMP, 1e-2, CROSSING, 2.0, u_begin=-2.0)
    assert traj.u_range == (-2.0, 2.0)
    np.testing.assert_allclose(traj.x(-2.0), [-1.0, 0.0], atol=1e-12)


def test_trajectory_rows_and_columns():
    traj = integrate(E2, QUAD, BUMP, 1e-2, FLAT_DATA, 1.0)
    assert traj.columns() == ["u", "v", "vdot", "x1", "x2", "xdot1", "xdot2"]
    rows = traj.rows()
    assert rows.shape[1] == 7
    np.testing.assert_allclose(rows[:, 2], traj.vdot(rows[:, 0]), atol=1e-9)
    assert traj.samples[0].u == -1.0


def test_eps_limits():
    with pytest.raises(ParameterError):
        integrate(E2, QUAD, BUMP, 5e-7, FLAT_DATA, 1.0)
    with pytest.raises(ParameterError):
        integrate(E2, QUAD, BUMP, 2.0, FLAT_DATA, 1.0)


def test_chart_exit_during_integration():
    data = (0.0, 0.0, np.array([0.5, 0.0]), np.array([-1.0, 0.0]))
    with pytest.raises(ChartExitError):
        integrate(SPHERE, profile("0", SPHERE), BUMP, 1e-2, data, 2.0)


@pytest.mark.parametrize("args, expected", [
    ((1, 1, 0, 0, 0, 1, 2), 0.5),
    ((1, 1, 0, 0, 0, 1, 0), 1.0),
    ((2, 1, 1, 1, 0, 1, 2), 0.5),
])
def test_existence_interval_alpha(args, expected):
    assert existence_interval_alpha(*args) == expected


@settings(max_examples=50)
@given(b=st.floats(0.01, 10), c=st.floats(0.01, 10), F1=st.floats(0, 100), F2=st.floats(0, 100),
       k=st.floats(0, 10), C=st.floats(0.1, 5), v=st.floats(0, 10))
def test_alpha_in_unit_interval_and_monotone(b, c, F1, F2, k, C, v):
    a = existence_interval_alpha(b, c, F1, F2, k, C, v)
    assert 0 < a <= 1
    assert existence_interval_alpha(b, c, F1 + 1, F2, k, C, v) <= a


def test_lemma_free_motion():
    rep = verify_lemma_bounds(E2, profile("0", E2), BUMP, 1e-3, CROSSING)
    assert rep.alpha == 1.0
    assert rep.bounds_hold


def test_lemma_flat_crossing_baseline():
    rep = verify_lemma_bounds(E2, QUAD, BUMP, 1e-3, CROSSING, seed=0)
    assert rep.bounds_hold
    # regression baselines recorded from this configuration
    assert rep.alpha == pytest.approx(0.32269, abs=1e-4)
    assert rep.margin_b == pytest.approx(0.35555, abs=1e-4)
    assert rep.margin_c == pytest.approx(2.09872, abs=1e-4)


def test_lemma_adversarial_profile():
    rep = verify_lemma_bounds(E2, profile("100*x^2 + 50*y^2", E2), BUMP, 1e-3, CROSSING, b=0.1, c=0.1)
    assert rep.alpha < 1e-2
    assert rep.succeeded and rep.bounds_hold
