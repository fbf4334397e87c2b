"""Strict delta nets and smooth wave profiles.

A net is generated from a mother function ``rho`` supported in ``(-1, 1)``
by the scaling ``delta_eps(u) = rho(u/eps)/eps``. Three mothers ship with the
package (symmetric, asymmetric, signed); three deliberately broken families
exist for exercising the validator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import ParameterError
from .expr import Expression
from .quadrature import adaptive_simpson

NORMALISATION_TOL = 1e-12


def _beta(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    m = np.abs(t) < 1.0
    out[m] = np.exp(-1.0 / (1.0 - t[m] ** 2))
    return out


def _dbeta(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    m = np.abs(t) < 1.0
    tm = t[m]
    q = 1.0 - tm ** 2
    out[m] = np.exp(-1.0 / q) * (-2.0 * tm / (q * q))
    return out


@lru_cache(maxsize=None)
def _beta_mass():
    return adaptive_simpson(_beta, -1.0, 1.0, tol=NORMALISATION_TOL)


class Mother:
    """A smooth compactly supported function on the real line with its derivative."""

    def __init__(self, name, value, slope, support, breakpoints=()):
        self.name = name
        self._value = value
        self._slope = slope
        self.support = support
        self.breakpoints = tuple(breakpoints)

    def __reduce__(self):
        return (mother, (self.name,))

    def __repr__(self):
        return f"Mother({self.name!r}, support={self.support})"

    def __call__(self, t):
        return self._value(t)

    def slope(self, t):
        return self._slope(t)

    @property
    def radius(self):
        return max(abs(self.support[0]), abs(self.support[1]))


def _make_bump():
    c = 1.0 / _beta_mass()
    return Mother("bump", lambda t: c * _beta(t), lambda t: c * _dbeta(t), (-1.0, 1.0))


def _make_asym():
    # skewed bump on (-1, 0.2): (t + 1) * beta((t + 0.4) / 0.6)
    w, m = 0.6, -0.4

    def raw(t):
        t = np.asarray(t, dtype=float)
        return (t + 1.0) * _beta((t - m) / w)

    c = 1.0 / adaptive_simpson(raw, -1.0, 0.2, tol=NORMALISATION_TOL)

    def value(t):
        return c * raw(t)

    def slope(t):
        t = np.asarray(t, dtype=float)
        s = (t - m) / w
        return c * (_beta(s) + (t + 1.0) * _dbeta(s) / w)

    return Mother("bump-asym", value, slope, (-1.0, 0.2))


def _make_signed():
    # positive lobe on (-1, 0), negative lobe on (0, 1); mass 1, L1 norm 1.6
    lobe = 0.5 * _beta_mass()
    a, b = 1.3 / lobe, 0.3 / lobe

    def value(t):
        t = np.asarray(t, dtype=float)
        return a * _beta(2.0 * t + 1.0) - b * _beta(2.0 * t - 1.0)

    def slope(t):
        t = np.asarray(t, dtype=float)
        return 2.0 * a * _dbeta(2.0 * t + 1.0) - 2.0 * b * _dbeta(2.0 * t - 1.0)

    return Mother("bump-signed", value, slope, (-1.0, 1.0), breakpoints=(0.0,))


def _make_wide():
    # support (-1.5, 1.5): violates the support axiom, mass and L1 norm are fine
    c = 1.0 / (1.5 * _beta_mass())
    return Mother("wide-bump", lambda t: c * _beta(np.asarray(t) / 1.5),
                  lambda t: c * _dbeta(np.asarray(t) / 1.5) / 1.5, (-1.5, 1.5))


def _make_mass2():
    c = 2.0 / _beta_mass()
    return Mother("bump-mass2", lambda t: c * _beta(t), lambda t: c * _dbeta(t), (-1.0, 1.0))


def _make_odd():
    # zero-mass odd profile used by the L1 blow-up family
    def value(t):
        t = np.asarray(t, dtype=float)
        return _beta(2.0 * t + 1.0) - _beta(2.0 * t - 1.0)

    def slope(t):
        t = np.asarray(t, dtype=float)
        return 2.0 * _dbeta(2.0 * t + 1.0) - 2.0 * _dbeta(2.0 * t - 1.0)

    return Mother("odd", value, slope, (-1.0, 1.0), breakpoints=(0.0,))


_MOTHERS = {
    "bump": _make_bump,
    "bump-asym": _make_asym,
    "bump-signed": _make_signed,
    "wide-bump": _make_wide,
    "bump-mass2": _make_mass2,
    "odd": _make_odd,
}

SHIPPED_NETS = ("bump", "bump-asym", "bump-signed")


@lru_cache(maxsize=None)
def mother(name):
    try:
        return _MOTHERS[name]()
    except KeyError:
        raise ValueError(f"unknown mother function {name!r}; known: {sorted(_MOTHERS)}") from None


def _check_eps(eps):
    if not (0.0 < eps <= 1.0):
        raise ParameterError(f"eps must lie in (0, 1], got {eps!r}")


@dataclass(frozen=True)
class DeltaNet:
    """The family ``delta_eps(u) = rho(u/eps)/eps`` for a mother ``rho``.

    ``mass`` and ``l1_norm`` are the integrals of ``rho`` and ``|rho|``; under
    the scaling model they are independent of ``eps`` and ``l1_norm`` is the
    uniform L1 bound of the net.
    """

    mother: Mother
    label: str
    mass: float = field(init=False)
    l1_norm: float = field(init=False)

    def __post_init__(self):
        lo, hi = self.mother.support
        bps = self.mother.breakpoints
        mass = adaptive_simpson(self.mother, lo, hi, tol=NORMALISATION_TOL, breakpoints=bps)
        l1 = adaptive_simpson(lambda t: np.abs(self.mother(t)), lo, hi,
                              tol=NORMALISATION_TOL, breakpoints=bps)
        object.__setattr__(self, "mass", mass)
        object.__setattr__(self, "l1_norm", l1)

    @property
    def support_radius(self):
        return self.mother.radius

    @property
    def breakpoints(self):
        return self.mother.breakpoints

    def delta(self, eps, u):
        """Unchecked ``delta_eps(u)``; accepts scalars or arrays."""
        out = self.mother(np.asarray(u, dtype=float) / eps) / eps
        return float(out) if np.ndim(out) == 0 else out

    def ddelta(self, eps, u):
        """Unchecked ``d/du delta_eps(u) = rho'(u/eps)/eps^2``."""
        out = self.mother.slope(np.asarray(u, dtype=float) / eps) / (eps * eps)
        return float(out) if np.ndim(out) == 0 else out


class ModulatedNet(DeltaNet):
    """``delta_eps = (rho(u/eps) + A(eps) sigma(u/eps)) / eps`` with ``A(eps) = eps**power``.

    Only used to build the L1 blow-up non-example; it leaves the pure-scaling
    model on purpose.
    """

    def __init__(self, base, odd, power, label):
        object.__setattr__(self, "odd", odd)
        object.__setattr__(self, "power", power)
        super().__init__(base, label)

    def __reduce__(self):
        return (ModulatedNet, (self.mother, self.odd, self.power, self.label))

    def delta(self, eps, u):
        t = np.asarray(u, dtype=float) / eps
        out = (self.mother(t) + eps ** self.power * self.odd(t)) / eps
        return float(out) if np.ndim(out) == 0 else out

    def ddelta(self, eps, u):
        t = np.asarray(u, dtype=float) / eps
        out = (self.mother.slope(t) + eps ** self.power * self.odd.slope(t)) / (eps * eps)
        return float(out) if np.ndim(out) == 0 else out


def net(name):
    """A named net: shipped ``bump``, ``bump-asym``, ``bump-signed`` or the
    non-examples ``wide-bump``, ``bump-mass2``, ``l1-blowup``."""
    if name == "l1-blowup":
        return ModulatedNet(mother("bump"), mother("odd"), -0.5, "l1-blowup")
    if name == "odd":
        raise ValueError("'odd' is a building block, not a net")
    return DeltaNet(mother(name), name)


def eval_delta(net, eps, u):
    """``delta_eps(u)``; exactly zero outside the support."""
    _check_eps(eps)
    return net.delta(eps, u)


def delta_mass_partial(net, eps, a, b, tol=1e-12):
    """``integral_a^b delta_eps(u) du`` by adaptive Simpson."""
    _check_eps(eps)
    if a > b:
        raise ValueError("need a <= b")
    r = net.support_radius * eps
    lo, hi = max(a, -r), min(b, r)
    if lo >= hi:
        return 0.0
    # integrate in t = u/eps so the quadrature sees an O(1) integrand
    return adaptive_simpson(lambda t: net.delta(eps, eps * t) * eps, lo / eps, hi / eps,
                            tol=tol, breakpoints=net.breakpoints)


@dataclass
class AxiomVerdict:
    name: str
    passed: bool
    detail: str


@dataclass
class ValidationReport:
    label: str
    eps: list
    masses: list
    l1_norms: list
    support_violations: list
    mass_limit: float
    C: float
    verdicts: dict

    @property
    def passed(self):
        return all(v.passed for v in self.verdicts.values())

    @property
    def failed_axioms(self):
        return [k for k, v in self.verdicts.items() if not v.passed]

    def to_dict(self):
        return {
            "label": self.label,
            "eps": list(self.eps),
            "masses": list(self.masses),
            "l1_norms": list(self.l1_norms),
            "support_violations": list(self.support_violations),
            "mass_limit": self.mass_limit,
            "C": self.C,
            "passed": self.passed,
            "failed_axioms": self.failed_axioms,
            "verdicts": {k: {"passed": v.passed, "detail": v.detail} for k, v in self.verdicts.items()},
        }


def validate_strict(net, eps_list, quad_tol=1e-8, samples=400):
    """Check the three strict-delta-net axioms on a finite list of eps values.

    support: ``delta_eps`` sampled on ``eps <= |u| <= 3 eps`` must be exactly 0.
    mass: ``|integral delta_eps - 1| <= quad_tol`` at the smallest eps.
    l1_bound: ``integral |delta_eps|`` must not grow as eps decreases; the
    largest observed value is the witnessed constant C.
    """
    eps_list = sorted((float(e) for e in eps_list), reverse=True)
    if not eps_list:
        raise ValueError("eps_list must not be empty")
    for e in eps_list:
        _check_eps(e)
    r = max(1.0, net.support_radius)
    bps = net.breakpoints
    ring = np.linspace(1.0, 3.0, samples)
    masses, l1s, violations = [], [], []
    for e in eps_list:
        outside = np.concatenate([ring, -ring, [10.0, -10.0]]) * e
        vals = net.delta(e, outside)
        violations.append(int(np.count_nonzero(vals)))
        masses.append(adaptive_simpson(lambda t: net.delta(e, e * t) * e, -r, r,
                                       tol=1e-2 * quad_tol, breakpoints=bps))
        l1s.append(adaptive_simpson(lambda t: np.abs(net.delta(e, e * t)) * e, -r, r,
                                    tol=1e-2 * quad_tol, breakpoints=bps))

    bad = [(e, k) for e, k in zip(eps_list, violations) if k]
    support = AxiomVerdict(
        "support", not bad,
        "delta_eps vanishes outside (-eps, eps)" if not bad else
        f"nonzero values outside (-eps, eps) at eps={bad[0][0]:.3g} ({bad[0][1]} samples)",
    )
    mass_limit = masses[-1]
    mass_ok = abs(mass_limit - 1.0) <= quad_tol
    mass = AxiomVerdict(
        "mass", mass_ok,
        f"integral tends to {mass_limit:.12g}" + ("" if mass_ok else ", not 1"),
    )
    C = max(l1s)
    growth = max(l1s[i] - max(l1s[:i]) for i in range(1, len(l1s))) if len(l1s) > 1 else 0.0
    l1_ok = growth <= 1e-6 * l1s[0] + quad_tol
    detail = f"uniform L1 bound C = {C:.6g}"
    if not l1_ok:
        if len(l1s) > 1 and min(l1s) > 0:
            slope = np.polyfit(np.log(eps_list), np.log(l1s), 1)[0]
            detail = f"L1 norm grows as eps decreases (~ eps^{slope:.2f}); no uniform bound"
        else:
            detail = "L1 norm grows as eps decreases; no uniform bound"
    l1 = AxiomVerdict("l1_bound", l1_ok, detail)
    return ValidationReport(net.label, eps_list, masses, l1s, violations, mass_limit, C,
                            {"support": support, "mass": mass, "l1_bound": l1})


class WaveProfile:
    """The smooth profile ``f`` of the impulsive term ``f(x) D(u)``."""

    def __init__(self, expression, coord_names, label=None):
        self.expr = expression if isinstance(expression, Expression) else Expression(expression, coord_names)
        self.label = label or self.expr.text

    def __reduce__(self):
        return (WaveProfile, (self.expr.text, self.expr.names, self.label))

    def __repr__(self):
        return f"WaveProfile({self.expr.text!r})"

    @property
    def is_zero(self):
        return self.expr.is_zero

    def __call__(self, x):
        return self.expr(x)

    def partials(self, x):
        return self.expr.gradient(x)

    def hessian(self, x):
        return self.expr.hessian(x)

    def scaled(self, lam):
        return WaveProfile(f"({lam!r})*({self.expr.text})", self.expr.names, f"{lam!r}*{self.label}")


def profile(expression, M, label=None):
    """Profile given by an expression in the coordinate names of ``M``."""
    return WaveProfile(expression, M.coord_names, label)
