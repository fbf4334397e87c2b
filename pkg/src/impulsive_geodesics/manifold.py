"""Riemannian backgrounds presented in a single global chart."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ChartExitError, DifferentiationError, DomainError, GeometryError
from .expr import Expression
from .integrator import DenseSolution, dopri5

SPD_TOL = 1e-12
DEFAULT_FD_STEP = 1e-5
SPHERE_MARGIN = 1e-3


class ChartManifold:
    """A Riemannian manifold ``(N, h)`` covered by one chart.

    ``metric`` maps a point to the matrix ``h_ij``. ``christoffel`` (optional)
    maps a point to ``G[k, i, j] = Gamma^k_ij``; without it the symbols are
    obtained by central finite differences of the metric with step
    ``fd_step``. ``domain`` is a predicate on chart points.

    Instances are immutable. They pickle by their construction recipe so that
    they can be shipped to worker processes.
    """

    def __init__(self, name, dim, coord_names, metric, domain, christoffel=None,
                 inverse_metric=None, fd_step=DEFAULT_FD_STEP, recipe=None):
        self.name = name
        self.dim = int(dim)
        self.coord_names = tuple(coord_names)
        self._metric = metric
        self._domain = domain
        self._christoffel = christoffel
        self._inverse = inverse_metric
        self.fd_step = fd_step
        self._recipe = recipe

    def __reduce__(self):
        if self._recipe is None:
            raise TypeError(f"manifold {self.name!r} was built without a recipe and cannot be pickled")
        return self._recipe

    def __repr__(self):
        return f"ChartManifold({self.name!r}, dim={self.dim})"

    @property
    def analytic_christoffel(self):
        return self._christoffel is not None

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        return x.shape == (self.dim,) and bool(np.all(np.isfinite(x))) and bool(self._domain(x))

    def _require(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise DomainError(f"{self.name}: expected a point of dimension {self.dim}, got shape {x.shape}")
        if not self.contains(x):
            raise DomainError(f"{self.name}: point {x.tolist()} outside chart domain")
        return x

    # unchecked evaluators, used on the integrator hot path

    def metric(self, x):
        return self._metric(x)

    def inverse_metric(self, x):
        if self._inverse is not None:
            return self._inverse(x)
        return np.linalg.inv(self._metric(x))

    def christoffel(self, x):
        if self._christoffel is not None:
            return self._christoffel(x)
        return fd_christoffel(self, x, self.fd_step)

    def christoffel_derivative(self, x, step=1e-4):
        """Return ``dG[m, k, i, j] = d Gamma^k_ij / dx^m`` by central differences."""
        x = np.asarray(x, dtype=float)
        out = np.empty((self.dim,) * 4)
        for m in range(self.dim):
            e = np.zeros(self.dim)
            e[m] = step
            out[m] = (self.christoffel(x + e) - self.christoffel(x - e)) / (2.0 * step)
        return out

    def speed(self, x, xdot):
        return math.sqrt(max(float(xdot @ self._metric(x) @ xdot), 0.0))


def fd_christoffel(M, x, step=DEFAULT_FD_STEP):
    """Christoffel symbols from central differences of the metric.

    Uses ``Gamma^k_ij = 1/2 h^km (d_i h_jm + d_j h_im - d_m h_ij)``.
    """
    x = np.asarray(x, dtype=float)
    n = M.dim
    dh = np.empty((n, n, n))  # dh[m, i, j] = d_m h_ij
    for m in range(n):
        e = np.zeros(n)
        e[m] = step
        xp, xm = x + e, x - e
        if not (M.contains(xp) and M.contains(xm)):
            raise DifferentiationError(
                f"{M.name}: finite-difference stencil at {x.tolist()} with step {step} leaves the domain"
            )
        dh[m] = (M.metric(xp) - M.metric(xm)) / (2.0 * step)
    # lower[m, i, j] = d_i h_jm + d_j h_im - d_m h_ij
    lower = np.einsum("ijm->mij", dh) + np.einsum("jim->mij", dh) - dh
    return 0.5 * np.einsum("km,mij->kij", M.inverse_metric(x), lower)


def metric_at(M, x):
    """Metric matrix at ``x``, checked for symmetry and positive-definiteness."""
    x = M._require(x)
    h = np.asarray(M.metric(x), dtype=float)
    if not np.allclose(h, h.T, rtol=0.0, atol=SPD_TOL * max(1.0, np.abs(h).max())):
        raise GeometryError(f"{M.name}: metric at {x.tolist()} is not symmetric")
    if np.linalg.eigvalsh(0.5 * (h + h.T)).min() <= 0.0:
        raise GeometryError(f"{M.name}: metric at {x.tolist()} is not positive-definite")
    return h


def inverse_metric_at(M, x):
    return M.inverse_metric(M._require(x))


def christoffel_at(M, x):
    return M.christoffel(M._require(x))


def grad_h(M, f, x):
    """Riemannian gradient ``h^km d_m f`` of the profile ``f`` at ``x``."""
    x = M._require(x)
    return M.inverse_metric(x) @ f.partials(x)


# builtin manifolds

def _euclidean(n):
    eye = np.eye(n)
    zeros = np.zeros((n, n, n))
    if n == 1:
        names = ("x",)
    elif n == 2:
        names = ("x", "y")
    elif n == 3:
        names = ("x", "y", "z")
    else:
        names = tuple(f"x{i + 1}" for i in range(n))
    return ChartManifold(
        f"euclidean:{n}", n, names,
        metric=lambda x: eye.copy(),
        domain=lambda x: True,
        christoffel=lambda x: zeros.copy(),
        inverse_metric=lambda x: eye.copy(),
        recipe=(builtin, (f"euclidean:{n}",)),
    )


def _sphere(margin=SPHERE_MARGIN):
    # chart (theta, phi), h = diag(1, sin^2 theta)
    def metric(x):
        s = math.sin(x[0])
        return np.array([[1.0, 0.0], [0.0, s * s]])

    def inverse(x):
        s = math.sin(x[0])
        return np.array([[1.0, 0.0], [0.0, 1.0 / (s * s)]])

    def christoffel(x):
        s, c = math.sin(x[0]), math.cos(x[0])
        G = np.zeros((2, 2, 2))
        G[0, 1, 1] = -s * c
        G[1, 0, 1] = G[1, 1, 0] = c / s
        return G

    return ChartManifold(
        "sphere", 2, ("theta", "phi"), metric,
        domain=lambda x: margin < x[0] < math.pi - margin,
        christoffel=christoffel, inverse_metric=inverse,
        recipe=(builtin, ("sphere", margin)),
    )


def _half_plane():
    # Poincare half-plane, h = diag(1/y^2, 1/y^2)
    def metric(x):
        w = 1.0 / (x[1] * x[1])
        return np.array([[w, 0.0], [0.0, w]])

    def inverse(x):
        w = x[1] * x[1]
        return np.array([[w, 0.0], [0.0, w]])

    def christoffel(x):
        r = 1.0 / x[1]
        G = np.zeros((2, 2, 2))
        G[0, 0, 1] = G[0, 1, 0] = -r
        G[1, 0, 0] = r
        G[1, 1, 1] = -r
        return G

    return ChartManifold(
        "half-plane", 2, ("x", "y"), metric,
        domain=lambda x: x[1] > 0.0,
        christoffel=christoffel, inverse_metric=inverse,
        recipe=(builtin, ("half-plane",)),
    )


def builtin(name, margin=SPHERE_MARGIN):
    """Return a builtin manifold: ``"euclidean:n"``, ``"sphere"`` or ``"half-plane"``."""
    if name.startswith("euclidean"):
        _, _, n = name.partition(":")
        try:
            dim = int(n) if n else 2
        except ValueError:
            raise ValueError(f"bad euclidean dimension in {name!r}") from None
        if dim < 1:
            raise ValueError("euclidean dimension must be positive")
        return _euclidean(dim)
    if name == "sphere":
        return _sphere(margin)
    if name == "half-plane":
        return _half_plane()
    raise ValueError(f"unknown builtin manifold {name!r}")


def custom(coords, metric, bounds=None, name="custom", fd_step=DEFAULT_FD_STEP):
    """Manifold from closed-form metric components.

    ``metric`` is an n x n nested list of expression strings over ``coords``;
    ``bounds`` optionally gives an open interval ``[lo, hi]`` per coordinate;
    ``None`` or ``nan`` leaves an end unbounded (TOML has no null).
    Christoffel symbols use finite differences.
    """
    coords = tuple(coords)
    n = len(coords)
    if len(metric) != n or any(len(row) != n for row in metric):
        raise ValueError(f"metric must be a {n}x{n} array of expressions")
    comps = [[Expression(metric[i][j], coords) for j in range(n)] for i in range(n)]
    lo = np.full(n, -np.inf)
    hi = np.full(n, np.inf)
    if bounds is not None:
        if len(bounds) != n:
            raise ValueError(f"bounds must have {n} entries")
        for i, pair in enumerate(bounds):
            if pair is None:
                continue
            a, b = pair
            lo[i] = -np.inf if a is None or np.isnan(a) else float(a)
            hi[i] = np.inf if b is None or np.isnan(b) else float(b)

    def h(x):
        return np.array([[comps[i][j](x) for j in range(n)] for i in range(n)])

    recipe = (custom, (coords, [list(map(str, r)) for r in metric],
                       None if bounds is None else [None if p is None else list(p) for p in bounds],
                       name, fd_step))
    return ChartManifold(
        name, n, coords, h,
        domain=lambda x: bool(np.all(x > lo) and np.all(x < hi)),
        fd_step=fd_step, recipe=recipe,
    )


# background geodesics

def geodesic_rhs(M):
    n = M.dim

    def rhs(u, y):
        x, xd = y[:n], y[n:]
        acc = -np.einsum("kij,i,j->k", M.christoffel(x), xd, xd)
        return np.concatenate([xd, acc])

    return rhs


def geodesic_second_derivative(M):
    n = M.dim

    def second(u, y):
        x, xd = y[:n], y[n:]
        G = M.christoffel(x)
        acc = -np.einsum("kij,i,j->k", G, xd, xd)
        dG = M.christoffel_derivative(x)
        jerk = -np.einsum("mkij,m,i,j->k", dG, xd, xd, xd) - 2.0 * np.einsum("kij,i,j->k", G, xd, acc)
        return np.concatenate([acc, jerk])

    return second


def chart_guard(M):
    n = M.dim

    def check(u, y):
        if not M.contains(y[:n]):
            raise ChartExitError(f"{M.name}: geodesic left the chart domain near u={u:.6g}", u_exit=u)

    return check


@dataclass(frozen=True)
class BackgroundGeodesic:
    """An unforced geodesic of ``(N, h)`` sampled on ``[min(u0,u1), max(u0,u1)]``."""

    manifold_name: str
    start_u: float
    x0: np.ndarray
    xdot0: np.ndarray
    solution: DenseSolution
    speed_drift: float
    stats: dict = field(default_factory=dict)

    @property
    def u(self):
        return self.solution.t

    @property
    def x(self):
        return self.solution.y[:, : len(self.x0)]

    @property
    def xdot(self):
        return self.solution.y[:, len(self.x0):]

    @property
    def u_range(self):
        return self.solution.t[0], self.solution.t[-1]

    def states(self):
        return [(float(u), self.x[i].copy(), self.xdot[i].copy()) for i, u in enumerate(self.u)]

    def at(self, u):
        """Return ``(x, xdot)`` at ``u`` by dense output."""
        y = self.solution(u)
        n = len(self.x0)
        return y[..., :n], y[..., n:]


def background_geodesic(M, x0, xdot0, u0, u1, tol=1e-10, max_step=0.1):
    """Integrate ``x'' = -Gamma(x)(x', x')`` from ``u0`` to ``u1`` (either direction)."""
    x0 = M._require(x0)
    xdot0 = np.asarray(xdot0, dtype=float)
    if xdot0.shape != (M.dim,):
        raise DomainError(f"velocity must have dimension {M.dim}")
    y0 = np.concatenate([x0, xdot0])
    if u1 == u0:
        raise ValueError("empty integration interval")
    sol = dopri5(geodesic_rhs(M), u0, y0, u1, rtol=tol, atol=tol * 1e-2,
                 max_step=max_step, check=chart_guard(M))
    dense = DenseSolution.build(sol, geodesic_second_derivative(M))
    n = M.dim
    s0 = M.speed(x0, xdot0)
    speeds = np.array([M.speed(y[:n], y[n:]) for y in dense.y])
    drift = float(np.max(np.abs(speeds - s0)))
    return BackgroundGeodesic(M.name, float(u0), x0, xdot0, dense, drift, sol.stats)
