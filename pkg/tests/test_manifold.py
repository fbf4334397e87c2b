import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from impulsive_geodesics import manifold
from impulsive_geodesics.errors import ChartExitError, DifferentiationError, DomainError, GeometryError
from impulsive_geodesics.impulse import profile

E2 = manifold.builtin("euclidean:2")
SPHERE = manifold.builtin("sphere")
HALF = manifold.builtin("half-plane")


@pytest.mark.parametrize("M, x, expected", [
    (E2, (3.0, -1.0), np.eye(2)),
    (HALF, (0.0, 2.0), np.diag([0.25, 0.25])),
    (SPHERE, (math.pi / 2, 0.0), np.eye(2)),
])
def test_metric_examples(M, x, expected):
    np.testing.assert_allclose(manifold.metric_at(M, np.array(x)), expected, atol=1e-15)


def test_christoffel_flat_vanishes():
    for n in (1, 2, 3, 5):
        M = manifold.builtin(f"euclidean:{n}")
        G = manifold.christoffel_at(M, np.linspace(-1, 1, n))
        assert G.shape == (n, n, n)
        assert not G.any()


def test_christoffel_sphere():
    G = manifold.christoffel_at(SPHERE, np.array([math.pi / 4, 0.0]))
    expected = np.zeros((2, 2, 2))
    expected[0, 1, 1] = -0.5
    expected[1, 0, 1] = expected[1, 1, 0] = 1.0
    np.testing.assert_allclose(G, expected, atol=1e-14)


def test_christoffel_half_plane():
    G = manifold.christoffel_at(HALF, np.array([0.0, 1.0]))
    expected = np.zeros((2, 2, 2))
    expected[0, 0, 1] = expected[0, 1, 0] = -1.0
    expected[1, 0, 0] = 1.0
    expected[1, 1, 1] = -1.0
    np.testing.assert_allclose(G, expected, atol=1e-14)


def _random_points(M, rng, count=20):
    if M is SPHERE:
        return np.column_stack([rng.uniform(0.3, 2.8, count), rng.uniform(-3, 3, count)])
    if M is HALF:
        return np.column_stack([rng.uniform(-3, 3, count), rng.uniform(0.2, 4, count)])
    return rng.uniform(-3, 3, (count, M.dim))


@pytest.mark.parametrize("M", [SPHERE, HALF])
def test_christoffel_fd_order(M):
    rng = np.random.default_rng(1)
    for x in _random_points(M, rng, 8):
        exact = manifold.christoffel_at(M, x)
        errs = [np.max(np.abs(manifold.fd_christoffel(M, x, h) - exact)) for h in (4e-3, 2e-3, 1e-3)]
        orders = [math.log2(a / b) for a, b in zip(errs[:-1], errs[1:])]
        assert min(orders) >= 1.8, (x, errs)


@pytest.mark.parametrize("M", [E2, SPHERE, HALF])
def test_symmetry_and_inverse_roundtrip(M):
    rng = np.random.default_rng(2)
    for x in _random_points(M, rng):
        h = manifold.metric_at(M, x)
        G = manifold.christoffel_at(M, x)
        np.testing.assert_array_equal(h, h.T)
        np.testing.assert_allclose(G, np.swapaxes(G, 1, 2), atol=1e-14)
        err = h @ manifold.inverse_metric_at(M, x) - np.eye(M.dim)
        assert np.max(np.abs(err)) <= 1e-10


@pytest.mark.parametrize("M, x, expr, expected", [
    (E2, (1.0, 0.0), "x^2 - y^2", (2.0, 0.0)),
    (HALF, (0.0, 2.0), "x", (4.0, 0.0)),
    (SPHERE, (1.0, 0.3), "3", (0.0, 0.0)),
    (SPHERE, (math.pi / 2, 0.0), "cos(theta)", (-1.0, 0.0)),
])
def test_grad_h(M, x, expr, expected):
    g = manifold.grad_h(M, profile(expr, M), np.array(x))
    np.testing.assert_allclose(g, expected, atol=1e-14)


def test_domain_errors():
    with pytest.raises(DomainError):
        manifold.metric_at(HALF, np.array([0.0, -1.0]))
    with pytest.raises(DomainError):
        manifold.metric_at(SPHERE, np.array([0.0, 0.0]))
    with pytest.raises(DomainError):
        manifold.metric_at(E2, np.zeros(3))


def test_degenerate_custom_metric_is_rejected():
    M = manifold.custom(["x", "y"], [["1", "0"], ["0", "x"]], [(None, None), (None, None)])
    with pytest.raises(GeometryError):
        manifold.metric_at(M, np.array([-1.0, 0.0]))


def test_fd_christoffel_needs_room_inside_domain():
    M = manifold.custom(["x", "y"], [["1/y^2", "0"], ["0", "1/y^2"]], [(None, None), (0.0, None)])
    with pytest.raises(DifferentiationError):
        manifold.fd_christoffel(M, np.array([0.0, 1e-7]), step=1e-5)


def test_custom_metric_matches_builtin():
    M = manifold.custom(["x", "y"], [["1/y^2", "0"], ["0", "1/y^2"]], [(None, None), (0.0, None)])
    for x in ([0.0, 1.0], [0.4, 2.5]):
        x = np.array(x)
        np.testing.assert_allclose(M.christoffel(x), HALF.christoffel(x), atol=1e-8)


def test_unknown_builtin():
    with pytest.raises(ValueError):
        manifold.builtin("torus")


@pytest.mark.parametrize("M, x0, v0, u1, end, vend", [
    (E2, (0.0, 0.0), (1.0, 2.0), 1.0, (1.0, 2.0), (1.0, 2.0)),
    (SPHERE, (math.pi / 2, 0.0), (0.0, 1.0), math.pi / 2, (math.pi / 2, math.pi / 2), (0.0, 1.0)),
])
def test_background_geodesic_examples(M, x0, v0, u1, end, vend):
    g = manifold.background_geodesic(M, np.array(x0), np.array(v0), 0.0, u1)
    x, xd = g.at(u1)
    np.testing.assert_allclose(x, end, atol=1e-9)
    np.testing.assert_allclose(xd, vend, atol=1e-9)


def test_half_plane_geodesic_closed_form():
    # unit semicircle centred at the origin, unit speed: (tanh u, sech u)
    g = manifold.background_geodesic(HALF, np.array([0.0, 1.0]), np.array([1.0, 0.0]), 0.0, 1.0)
    u = np.linspace(0.0, 1.0, 11)
    np.testing.assert_allclose(g.at(u)[0], np.column_stack([np.tanh(u), 1 / np.cosh(u)]), atol=1e-9)
    x = g.at(1.0)[0]
    assert math.hypot(*x) == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("M, x0, v0", [
    (E2, (0.3, -0.2), (1.0, 0.5)),
    (SPHERE, (1.2, 0.1), (0.3, 0.8)),
    (HALF, (0.0, 1.0), (0.6, -0.4)),
])
def test_speed_conservation(M, x0, v0):
    g = manifold.background_geodesic(M, np.array(x0), np.array(v0), -1.0, 2.0)
    speeds = [M.speed(x, xd) for x, xd in zip(g.x, g.xdot)]
    assert max(abs(s - speeds[0]) for s in speeds) <= 1e-8
    assert g.speed_drift <= 1e-8


@settings(max_examples=15, deadline=None)
@given(theta=st.floats(0.6, 2.5), phi=st.floats(-2, 2), a=st.floats(-1, 1), b=st.floats(-1, 1))
def test_reversibility_on_sphere(theta, phi, a, b):
    x0, v0 = np.array([theta, phi]), np.array([a, b])
    tol = 1e-10
    fwd = manifold.background_geodesic(SPHERE, x0, v0, 0.0, 0.5, tol=tol)
    x1, v1 = fwd.at(0.5)
    back = manifold.background_geodesic(SPHERE, x1, v1, 0.5, 0.0, tol=tol)
    x2, v2 = back.at(0.0)
    assert np.max(np.abs(x2 - x0)) <= 10 * tol * (1 + np.abs(x0).max())
    assert np.max(np.abs(v2 - v0)) <= 10 * tol * (1 + np.abs(v0).max())


def test_sphere_chart_exit_reports_parameter():
    with pytest.raises(ChartExitError) as info:
        manifold.background_geodesic(SPHERE, np.array([0.5, 0.0]), np.array([-1.0, 0.0]), 0.0, 2.0)
    assert 0.45 < info.value.u_exit < 0.55


def test_manifolds_pickle():
    import pickle
    for M in (E2, SPHERE, HALF):
        M2 = pickle.loads(pickle.dumps(M))
        x = np.array([1.0, 0.5])
        np.testing.assert_array_equal(M2.christoffel(x), M.christoffel(x))
