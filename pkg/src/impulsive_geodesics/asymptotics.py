"""Sweeps over the regularisation parameter and the statements they test.

Each probe integrates the regularised system for a geometric grid of eps
values, measures one family of quantities, fits ``log(err) ~ slope*log(eps)``
and turns the result into verdicts. Values below a floor of
``100 * rel_tol`` are treated as integrator noise: they are excluded from fits
and count as converged.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .dynamics import BumpForcing, IntegratorConfig, integrate
from .expr import Expression
from .limit_oracle import limit_geodesic
from .quadrature import gauss_legendre

SCHEMA = "impulsive-geodesics/sweep-report/1"
JITTER = 0.10


def geometric_grid(start, stop, count):
    """``count`` values from ``start`` to ``stop`` equally spaced in log."""
    if count < 1:
        raise ValueError("count must be positive")
    if count == 1:
        return [float(start)]
    return [float(e) for e in np.geomspace(start, stop, int(count))]


def parallel_map(func, items, jobs=1):
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [func(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(func, items))


@dataclass
class SlopeFit:
    slope: float | None
    intercept: float | None
    residual: float | None
    used: int
    status: str  # "ok", "floor" or "insufficient"

    def to_dict(self):
        return asdict(self)


def fit_slope(eps, err, floor=0.0):
    """Least-squares slope of ``log err`` against ``log eps`` above ``floor``."""
    eps = np.asarray(eps, dtype=float)
    err = np.asarray(err, dtype=float)
    keep = np.isfinite(err) & (err > floor) & (err > 0.0)
    if keep.sum() == 0:
        return SlopeFit(None, None, None, 0, "floor")
    if keep.sum() < 2:
        return SlopeFit(None, None, None, int(keep.sum()), "insufficient")
    lx, ly = np.log(eps[keep]), np.log(err[keep])
    (slope, icpt), res, *_ = np.polyfit(lx, ly, 1, full=True)
    rms = math.sqrt(float(res[0]) / keep.sum()) if len(res) else 0.0
    return SlopeFit(float(slope), float(icpt), rms, int(keep.sum()), "ok")


def decreasing(err, floor=0.0, jitter=JITTER):
    """True when ``err`` (ordered by decreasing eps) never grows by more than ``jitter``."""
    err = list(err)
    return all(b <= (1.0 + jitter) * a or b <= floor for a, b in zip(err[:-1], err[1:]))


def _dense_grid(lo, hi, eps, reach, mesh, count=4001):
    pulse = np.linspace(-reach, reach, 401)
    pulse = pulse[(pulse >= lo) & (pulse <= hi)]
    mesh = mesh[(mesh >= lo) & (mesh <= hi)]
    return np.unique(np.concatenate([np.linspace(lo, hi, count), pulse, mesh]))


class TestFunction:
    """Test function ``phi(u)``: an expression in ``u`` cut off outside ``(a, b)``."""

    __test__ = False  # not a pytest class

    def __init__(self, expression, support, label=None):
        self.expr = Expression(expression, ("u",))
        self.support = (float(support[0]), float(support[1]))
        if not self.support[0] < self.support[1]:
            raise ValueError("test function support must be a non-empty interval")
        self.label = label or self.expr.text

    @classmethod
    def bump(cls, a, b, label=None):
        """The smooth bump ``exp(-1/(1-s^2))`` rescaled to ``(a, b)``."""
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        text = f"exp(-1/(1-((u-({mid!r}))/{half!r})^2))"
        return cls(text, (a, b), label or f"bump({a:g},{b:g})")

    @classmethod
    def zero(cls, a=-1.0, b=1.0):
        return cls("0", (a, b), "zero")

    def __reduce__(self):
        return (TestFunction, (self.expr.text, self.support, self.label))

    def __call__(self, u):
        u = np.atleast_1d(np.asarray(u, dtype=float))
        out = np.zeros_like(u)
        a, b = self.support
        m = (u > a) & (u < b)
        out[m] = [self.expr([s]) for s in u[m]]
        return out

    def l1(self):
        a, b = self.support
        return gauss_legendre(lambda u: np.abs(self(u)), a, b, pieces=8)


def pairing(traj, bg, phi):
    """``integral (v_eps - v_lim) phi du`` over the support of ``phi``."""
    a, b = phi.support
    reach = traj.system.net.support_radius * traj.eps

    def integrand(u):
        return (traj.v(u) - bg.v(u)) * phi(u)

    return gauss_legendre(integrand, a, b, breakpoints=(-reach, 0.0, reach),
                          n=32, pieces=16, rtol=1e-7, atol=1e-12)


# sweep

@dataclass
class SweepReport:
    scenario: str
    eps_grid: list
    floor: float
    rows: list
    slopes: dict
    verdicts: dict
    failures: dict
    limit: dict
    config: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(self.verdicts.values())

    def series(self, key):
        return [r.get(key, math.nan) for r in self.rows]

    def to_dict(self):
        return {
            "schema": SCHEMA,
            "scenario": self.scenario,
            "eps_grid": list(self.eps_grid),
            "floor": self.floor,
            "rows": self.rows,
            "slopes": {k: v.to_dict() for k, v in self.slopes.items()},
            "verdicts": dict(self.verdicts),
            "passed": self.passed,
            "failures": dict(self.failures),
            "limit": self.limit,
            "config": self.config,
        }


def _sweep_one(job):
    M, f, net, data, T, eps, cfg, bg, v_points, phis = job
    traj = integrate(M, f, net, eps, data, T, cfg, u_begin=-T if T > 1.0 else None)
    reach = net.support_radius * eps
    lo = max(-T, traj.u_range[0])
    grid = _dense_grid(lo, T, eps, reach, traj.u)
    x_err = np.linalg.norm(traj.x(grid) - bg.x(grid), axis=1)
    pts = np.array([p for p in v_points if abs(p) >= 0.1])
    v_errs = np.abs(traj.v(pts) - bg.v(pts)) if pts.size else np.zeros(0)
    jump = traj.xdot(reach) - traj.xdot(-reach)
    row = {
        "eps": eps,
        "sup_x_err": float(x_err.max()),
        "v_err": float(v_errs.max()) if v_errs.size else 0.0,
        "v_err_at": {f"{p:g}": float(e) for p, e in zip(pts, v_errs)},
        "jump_err": float(np.linalg.norm(jump - bg.refraction)),
        "x_end": traj.x(T).tolist(),
        "v_end": float(traj.v(T)),
        "steps": int(traj.stats["accepted"]),
        "rejected": int(traj.stats["rejected"]),
    }
    for phi in phis:
        row[f"pairing[{phi.label}]"] = abs(pairing(traj, bg, phi))
    return row


def sweep(M, f, net, data, T, eps_grid, cfg=None, *, kink_rule="printed", v_points=(-0.5, 0.5, 1.0),
          phis=(), tolerances=None, jobs=1, scenario="scenario", bg=None):
    """Measure convergence of ``x_eps`` and ``v_eps`` to the limit on ``[-T, T]``.

    Per eps: the sup over a dense grid of ``|x_eps - y|``, ``|v_eps - v_lim|``
    at ``v_points`` (points with ``|u| < 0.1`` are skipped), the error of the
    velocity jump across the pulse against the refraction, and optional
    pairings with test functions. Integration failures are recorded per eps.
    """
    cfg = cfg or IntegratorConfig()
    tol = {"x": 0.05, "v": 0.05, "jump": 0.05, "pairing": 0.05}
    tol.update(tolerances or {})
    eps_grid = sorted((float(e) for e in eps_grid), reverse=True)
    if bg is None:
        bg = limit_geodesic(M, f, data, u_min=-T, u_max=T, kink_rule=kink_rule)
    v_points = [p for p in v_points if -T <= p <= T]
    jobs_ = [(M, f, net, data, T, e, cfg, bg, v_points, tuple(phis)) for e in eps_grid]
    rows, failures = [], {}
    for e, res in zip(eps_grid, parallel_map(_safe(_sweep_one), jobs_, jobs)):
        if isinstance(res, str):
            failures[f"{e:.6g}"] = res
        else:
            rows.append(res)
    floor = 100.0 * cfg.rel_tol
    good_eps = [r["eps"] for r in rows]
    keys = ["sup_x_err", "v_err", "jump_err"] + [f"pairing[{p.label}]" for p in phis]
    slopes = {k: fit_slope(good_eps, [r[k] for r in rows], floor) for k in keys}
    limits = {"sup_x_err": tol["x"], "v_err": tol["v"], "jump_err": tol["jump"]}
    names = {"sup_x_err": "x_association", "v_err": "v_association", "jump_err": "velocity_jump"}
    verdicts = {"integration": not failures and bool(rows)}
    for k in keys:
        series = [r[k] for r in rows]
        name = names.get(k, k)
        limit = limits.get(k, tol["pairing"])
        verdicts[name] = bool(rows) and decreasing(series, floor) and (series[-1] <= limit or series[-1] <= floor)
    limit = bg.to_dict(samples=False)
    return SweepReport(scenario, eps_grid, floor, rows, slopes, verdicts, failures, limit)


class _safe:
    """Wrap a per-eps worker so an engine error is recorded instead of raised."""

    def __init__(self, func):
        self.func = func

    def __call__(self, job):
        from .errors import ImpulsiveGeodesicError
        try:
            return self.func(job)
        except ImpulsiveGeodesicError as exc:
            return f"{type(exc).__name__}: {exc}"


# association pairing

@dataclass
class PairingReport:
    eps: list
    values: dict  # label -> list of |pairing| per eps
    pointwise: dict  # label -> list of sup |v_eps - v_lim| on supp phi
    phi_l1: dict
    slopes: dict
    verdicts: dict

    def to_dict(self):
        return {
            "eps": self.eps,
            "values": self.values,
            "pointwise": self.pointwise,
            "phi_l1": self.phi_l1,
            "slopes": {k: v.to_dict() for k, v in self.slopes.items()},
            "verdicts": self.verdicts,
        }


def association_pairing(trajectories, bg, phis, tol=0.01, floor=1e-8):
    """Pair ``v_eps - v_lim`` with each test function for every trajectory.

    Trajectories are taken in order of decreasing eps. The verdict for a test
    function requires decreasing pairings ending below ``tol``.
    """
    trajs = sorted(trajectories, key=lambda t: -t.eps)
    eps = [t.eps for t in trajs]
    values, pointwise, l1s, slopes, verdicts = {}, {}, {}, {}, {}
    for phi in phis:
        vals = [abs(pairing(t, bg, phi)) for t in trajs]
        a, b = phi.support
        sups = []
        for t in trajs:
            lo, hi = max(a, t.u_range[0]), min(b, t.u_range[1])
            g = _dense_grid(lo, hi, t.eps, t.system.net.support_radius * t.eps, t.u, 2001)
            sups.append(float(np.max(np.abs(t.v(g) - bg.v(g)))))
        values[phi.label] = vals
        pointwise[phi.label] = sups
        l1s[phi.label] = phi.l1()
        slopes[phi.label] = fit_slope(eps, vals, floor)
        verdicts[phi.label] = decreasing(vals, floor) and (vals[-1] <= tol or vals[-1] <= floor)
    return PairingReport(eps, values, pointwise, l1s, slopes, verdicts)


# moderateness of derivatives

@dataclass
class ModeratenessReport:
    eps: list
    sups: dict  # "x1", "x2", "x3", "v2" -> list over eps
    slopes: dict
    required: dict
    verdicts: dict

    def to_dict(self):
        return {
            "eps": self.eps,
            "sups": self.sups,
            "slopes": {k: v.to_dict() for k, v in self.slopes.items()},
            "required": self.required,
            "verdicts": self.verdicts,
        }


def _moderate_one(job):
    M, f, net, data, eps, cfg = job
    reach = net.support_radius * eps
    traj = integrate(M, f, net, eps, data, reach, cfg)
    inside = traj.u[traj.u >= -reach]
    u = np.unique(np.concatenate([np.linspace(-reach, reach, 801), inside]))
    y = traj.state(u)
    sys_ = traj.system
    n = M.dim
    d1 = np.array([sys_(s, yi) for s, yi in zip(u, y)])
    d2 = np.array([sys_.second_derivative(s, yi) for s, yi in zip(u, y)])
    return {
        "x1": float(np.max(np.linalg.norm(y[:, 2 + n:], axis=1))),
        "x2": float(np.max(np.linalg.norm(d1[:, 2 + n:], axis=1))),
        "x3": float(np.max(np.linalg.norm(d2[:, 2 + n:], axis=1))),
        "v2": float(np.max(np.abs(d2[:, 0]))),
    }


def moderateness_probe(M, f, net, data, eps_grid, l_max=3, cfg=None, *, slack=0.2, jobs=1,
                       floor=1e-12):
    """Growth of ``sup |d^l x_eps/du^l|`` and ``sup |v_eps''|`` over the pulse.

    Order 1 comes from the state, order 2 from the right-hand side, order 3
    from its exact derivative along the flow. The verdict for ``x`` at order
    ``l`` requires a fitted exponent ``>= -(l-1) - slack``; for ``v''`` it is
    ``>= -2 - slack``.
    """
    if not 1 <= l_max <= 3:
        raise ValueError("l_max must be 1, 2 or 3")
    cfg = cfg or IntegratorConfig()
    eps_grid = sorted((float(e) for e in eps_grid), reverse=True)
    rows = parallel_map(_moderate_one, [(M, f, net, data, e, cfg) for e in eps_grid], jobs)
    keys = [f"x{l}" for l in range(1, l_max + 1)] + ["v2"]
    sups = {k: [r[k] for r in rows] for k in keys}
    required = {f"x{l}": -(l - 1) - slack for l in range(1, l_max + 1)}
    required["v2"] = -2.0 - slack
    slopes, verdicts = {}, {}
    for k in keys:
        fit = fit_slope(eps_grid, sups[k], floor)
        slopes[k] = fit
        verdicts[k] = fit.status != "ok" or fit.slope >= required[k]
    return ModeratenessReport(eps_grid, sups, slopes, required, verdicts)


# stability under negligible perturbations

def gronwall_bykov_bound(A, C3, C4, C, eps, T, start=None):
    """Majorant ``A exp(int c + int int c)`` with ``c = C3 + C4 |delta_eps|``.

    The integrals run from ``start`` (default ``-eps``) to ``T``; both the
    single and the iterated integral of ``|delta_eps|`` are bounded through
    the uniform L1 bound ``C``.
    """
    if start is None:
        start = -eps
    L = T - start
    if L < 0:
        raise ValueError("T must not precede the start of the interval")
    if A == 0.0:
        return 0.0
    return A * math.exp((C3 * L + C4 * C) + (C3 * L * L / 2.0 + C4 * C * L))


def _jacobian(fun, x, step=1e-6):
    x = np.asarray(x, dtype=float)
    cols = []
    for m in range(x.size):
        e = np.zeros_like(x)
        e[m] = step
        cols.append((fun(x + e) - fun(x - e)) / (2.0 * step))
    return np.column_stack(cols)


def lipschitz_constants(M, f, points, velocities):
    """Sampled operator-norm bounds of the forcing terms.

    ``C3`` bounds the derivatives of ``F1(x, z) = -Gamma(x)(z, z)`` in ``x`` and
    in ``z``; ``C4`` bounds the derivative of ``F2(x) = 1/2 grad_h f(x)``.
    Taken as the largest value over the supplied sample states; this is a
    heuristic stand-in for a supremum over the region the states visit.
    """
    C3 = C4 = 0.0
    flat = M.name.startswith("euclidean")
    for x, z in zip(points, velocities):
        if not flat:
            G = M.christoffel(x)
            jz = -2.0 * (G @ z)
            jx = _jacobian(lambda y: -(M.christoffel(y) @ z) @ z, x)
            C3 = max(C3, np.linalg.norm(jz, 2), np.linalg.norm(jx, 2))
        j2 = _jacobian(lambda y: 0.5 * M.inverse_metric(y) @ f.partials(y), x)
        C4 = max(C4, np.linalg.norm(j2, 2))
    return float(C3), float(C4)


@dataclass
class StabilityReport:
    q: int
    perturb: str
    eps: list
    psi: list
    psi_v: list
    bound: list
    A: list
    C3: list
    C4: list
    slope: SlopeFit
    K_prime: float
    floor: float
    noise: float
    verdicts: dict

    def to_dict(self):
        d = asdict(self)
        d["slope"] = self.slope.to_dict()
        return d


def _stability_one(job):
    M, f, net, data, q, eps, cfg, T, perturb, samples = job
    n = M.dim
    v0, vdot0, x0, xdot0 = data
    x0 = np.asarray(x0, dtype=float)
    xdot0 = np.asarray(xdot0, dtype=float)
    size = eps ** q
    base = integrate(M, f, net, eps, data, T, cfg)
    fx = fv = None
    d = np.zeros(n)
    dd = np.zeros(n)
    if perturb == "all":
        d = np.full(n, size)
        dd = np.full(n, size)
        pdata = (v0 + size, vdot0 + size, x0 + d, xdot0 + dd)
        center, half = 0.5 * (T - 1.0), 0.5 * (T + 1.0)
        fx = BumpForcing(np.full(n, size), center, half)
        fv = BumpForcing(size, center, half)
    elif perturb == "v0":
        pdata = (v0 + size, vdot0, x0, xdot0)
    elif perturb == "none":
        pdata = data
    else:
        raise ValueError(f"unknown perturbation mode {perturb!r}")
    other = integrate(M, f, net, eps, pdata, T, cfg, forcing_x=fx, forcing_v=fv)
    reach = net.support_radius * eps
    grid = _dense_grid(-1.0, T, eps, reach, np.concatenate([base.u, other.u]), 3001)
    ya, yb = base.state(grid), other.state(grid)
    psi_u = (np.linalg.norm(ya[:, 2:2 + n] - yb[:, 2:2 + n], axis=1)
             + np.linalg.norm(ya[:, 2 + n:] - yb[:, 2 + n:], axis=1))
    psi = float(psi_u.max())
    # diagnostic: distance to a solve at 100x tighter tolerances
    ref = integrate(M, f, net, eps, data, T, cfg.refined(1e-2)).state(grid)
    noise = (np.linalg.norm(ya[:, 2:2 + n] - ref[:, 2:2 + n], axis=1)
             + np.linalg.norm(ya[:, 2 + n:] - ref[:, 2 + n:], axis=1))
    psi_v = float(np.max(np.abs(ya[:, 0] - yb[:, 0])))
    L = T + 1.0
    b_l1 = fx.l1() if fx is not None else 0.0
    A = float(np.linalg.norm(d) + np.linalg.norm(dd) * (1.0 + L) + (1.0 + L) * b_l1)
    # states on both curves and on the segment joining them
    pick = np.linspace(0, len(grid) - 1, samples).astype(int)
    pts, vels = [], []
    for lam in (0.0, 0.5, 1.0):
        ys = (1.0 - lam) * ya[pick] + lam * yb[pick]
        pts.extend(ys[:, 2:2 + n])
        vels.extend(ys[:, 2 + n:])
    C3, C4 = lipschitz_constants(M, f, pts, vels)
    bound = gronwall_bykov_bound(A, C3, C4, net.l1_norm, eps, T, start=-1.0)
    return {"psi": psi, "psi_v": psi_v, "A": A, "C3": C3, "C4": C4, "bound": bound,
            "noise": 10.0 * float(noise.max())}


def stability_probe(M, f, net, data, q, eps_grid, cfg=None, *, T=1.0, perturb="all",
                    slack=0.2, samples=200, jobs=1):
    """Sensitivity of the solution to perturbations of size ``eps**q``.

    With ``perturb="all"`` every initial value is shifted by ``eps**q`` and
    smooth bump forcings of height ``eps**q`` are added to both equations.
    ``psi = sup (|x - x~| + |x' - x~'|)`` over ``[-1, T]`` must scale like
    ``eps**q`` (fitted exponent ``>= q - slack``) and stay below the
    Gronwall-Bykov majorant built from sampled Lipschitz constants.

    Values below the floor ``100 * rel_tol`` are not fitted. The report also
    carries ``noise``, ten times the distance of the unperturbed solution to
    a solve at 100x tighter tolerances, as evidence that the floor is above
    the actual integration error.
    """
    if not 1 <= q <= 8:
        raise ValueError("q must lie in 1..8")
    cfg = cfg or IntegratorConfig()
    eps_grid = sorted((float(e) for e in eps_grid), reverse=True)
    rows = parallel_map(_stability_one,
                        [(M, f, net, data, q, e, cfg, T, perturb, samples) for e in eps_grid], jobs)
    floor = 100.0 * cfg.rel_tol
    noise = max(r["noise"] for r in rows)
    psi = [r["psi"] for r in rows]
    fit = fit_slope(eps_grid, psi, floor)
    above = [p / e ** q for p, e in zip(psi, eps_grid) if p > floor]
    K = max(above) if above else 0.0
    verdicts = {
        "order": fit.status != "ok" or fit.slope >= q - slack,
        "gronwall": all(r["psi"] <= r["bound"] or r["psi"] <= floor for r in rows),
    }
    if perturb != "all":
        verdicts["x_at_floor"] = all(p <= floor for p in psi)
    return StabilityReport(q, perturb, eps_grid, psi, [r["psi_v"] for r in rows],
                           [r["bound"] for r in rows], [r["A"] for r in rows],
                           [r["C3"] for r in rows], [r["C4"] for r in rows], fit, K, floor, noise, verdicts)


# independence of the limit from the chosen net

def extrapolate(eps, values):
    """Fit ``value(eps) = L + a*eps`` and return ``(L, err)``.

    ``err`` is the larger of the standard error of ``L`` and the distance from
    the smallest-eps value to ``L``.
    """
    eps = np.asarray(eps, dtype=float)
    vals = np.asarray(values, dtype=float)
    X = np.column_stack([np.ones_like(eps), eps])
    coef, *_ = np.linalg.lstsq(X, vals, rcond=None)
    resid = vals - X @ coef
    dof = max(len(eps) - 2, 1)
    sigma2 = float(resid @ resid) / dof
    cov = sigma2 * np.linalg.inv(X.T @ X)
    se = math.sqrt(max(cov[0, 0], 0.0))
    near = abs(float(vals[np.argmin(eps)]) - float(coef[0]))
    return float(coef[0]), max(se, near)


def _endpoint_one(job):
    M, f, net, data, eps, T, cfg = job
    traj = integrate(M, f, net, eps, data, T, cfg)
    return traj.x(T).tolist() + [float(traj.v(T))]


@dataclass
class NetIndependenceReport:
    nets: list
    eps: list
    endpoints: dict  # net -> list over eps of [x..., v]
    limits: dict  # net -> [L per component]
    errors: dict  # net -> [err per component]
    pairs: dict
    passed: bool

    def to_dict(self):
        return asdict(self)


def net_independence(M, f, nets, data, T, eps_grid, cfg=None, *, factor=3.0, jobs=1):
    """Extrapolate ``(x(T), v(T))`` to eps -> 0 for each net and compare."""
    cfg = cfg or IntegratorConfig()
    eps_grid = sorted((float(e) for e in eps_grid), reverse=True)
    endpoints, limits, errors = {}, {}, {}
    for net in nets:
        ends = parallel_map(_endpoint_one, [(M, f, net, data, e, T, cfg) for e in eps_grid], jobs)
        arr = np.array(ends)
        fits = [extrapolate(eps_grid, arr[:, j]) for j in range(arr.shape[1])]
        endpoints[net.label] = arr.tolist()
        limits[net.label] = [L for L, _ in fits]
        errors[net.label] = [e for _, e in fits]
    labels = [n.label for n in nets]
    pairs = {}
    ok = True
    for i, a in enumerate(labels):
        for b in labels[i + 1:]:
            diff = np.abs(np.array(limits[a]) - np.array(limits[b]))
            allowed = factor * np.maximum(errors[a], errors[b])
            agree = bool(np.all(diff <= allowed))
            pairs[f"{a}~{b}"] = {"diff": diff.tolist(), "allowed": allowed.tolist(), "agree": agree}
            ok = ok and agree
    return NetIndependenceReport(labels, eps_grid, endpoints, limits, errors, pairs, ok)
