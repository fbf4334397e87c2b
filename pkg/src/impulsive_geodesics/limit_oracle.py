"""Closed-form distributional limit of the regularised geodesics.

As eps -> 0 the curve ``x_eps`` converges locally uniformly to a broken
geodesic: the background geodesic through the initial data up to ``u = 0``,
continued by the background geodesic leaving ``x(0)`` with velocity
``x'(0) + 1/2 grad_h f(x(0))``. The ``v`` component converges in the sense of
distributions to

    v0 + v0'(1 + u) + jump * H(u) + kink_slope * u_+ ,

with ``jump = -1/2 f(x(0))``. Two rules for ``kink_slope`` are offered:

``"printed"``
    ``-sum_j (x'^j(0) + 1/4 grad_h(f)^j(x(0))) d_j f(x(0))``, the commonly
    quoted form.
``"ode"``
    half of the above, which is what integrating the ``v`` equation across
    the pulse produces (the velocity change is
    ``-1/2 int delta_eps (df . x') du``, and ``x'`` ramps linearly in the
    accumulated mass of the pulse).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import RangeError
from .manifold import BackgroundGeodesic, background_geodesic, grad_h

KINK_RULES = ("printed", "ode")


def kink_slope(rule, xdot_cross, grad_cross, df_cross):
    printed = -float(np.dot(xdot_cross + 0.25 * grad_cross, df_cross))
    if rule == "printed":
        return printed
    if rule == "ode":
        return 0.5 * printed
    raise ValueError(f"unknown kink rule {rule!r}; expected one of {KINK_RULES}")


@dataclass(frozen=True)
class BrokenGeodesic:
    pre: BackgroundGeodesic
    post: BackgroundGeodesic
    back: BackgroundGeodesic | None
    cross_point: np.ndarray
    cross_velocity_pre: np.ndarray
    refraction: np.ndarray
    v0: float
    vdot0: float
    jump: float
    kink_slope: float
    kink_rule: str
    kink_slope_printed: float
    kink_slope_ode: float
    u_range: tuple

    @property
    def cross_velocity_post(self):
        return self.cross_velocity_pre + self.refraction

    def _x(self, u):
        if u < 0.0:
            if u < -1.0:
                if self.back is None:
                    raise RangeError(f"u={u} before the integrated range")
                return self.back.at(u)[0]
            return self.pre.at(u)[0]
        if u == 0.0:
            return self.cross_point.copy()
        return self.post.at(u)[0]

    def _xdot(self, u):
        if u < 0.0:
            if u < -1.0:
                return self.back.at(u)[1]
            return self.pre.at(u)[1]
        return self.post.at(u)[1]

    def _check(self, u):
        lo, hi = self.u_range
        u = np.asarray(u, dtype=float)
        if np.any(u < lo - 1e-12) or np.any(u > hi + 1e-12):
            raise RangeError(f"u outside limit range [{lo}, {hi}]")

    def v(self, u):
        """Limit of ``v`` with the right-continuous Heaviside ``H(0) = 1``."""
        self._check(u)
        u = np.asarray(u, dtype=float)
        step = (u >= 0.0).astype(float)
        out = self.v0 + self.vdot0 * (1.0 + u) + self.jump * step + self.kink_slope * u * step
        return float(out) if out.ndim == 0 else out

    def _pieces(self, u, index):
        u = np.asarray(u, dtype=float)
        out = np.empty((u.size, self.cross_point.size))
        parts = [(u < -1.0, self.back), ((u >= -1.0) & (u < 0.0), self.pre), (u >= 0.0, self.post)]
        for mask, geo in parts:
            if mask.any():
                if geo is None:
                    raise RangeError("u before the integrated range")
                out[mask] = geo.at(u[mask])[index]
        return out

    def x(self, u):
        self._check(u)
        if np.ndim(u) == 0:
            return self._x(float(u))
        return self._pieces(u, 0)

    def xdot(self, u):
        """One-sided velocity; at ``u = 0`` the post-impulse value."""
        self._check(u)
        if np.ndim(u) == 0:
            return self._xdot(float(u))
        return self._pieces(u, 1)

    def to_dict(self, samples=True):
        d = {
            "cross_point": self.cross_point.tolist(),
            "cross_velocity_pre": self.cross_velocity_pre.tolist(),
            "cross_velocity_post": self.cross_velocity_post.tolist(),
            "refraction": self.refraction.tolist(),
            "v0": self.v0,
            "vdot0": self.vdot0,
            "jump": self.jump,
            "kink_slope": self.kink_slope,
            "kink_rule": self.kink_rule,
            "kink_slope_printed": self.kink_slope_printed,
            "kink_slope_ode": self.kink_slope_ode,
            "u_range": list(self.u_range),
        }
        if samples:
            pieces = {"pre": self.pre, "post": self.post}
            if self.back is not None:
                pieces["back"] = self.back
            for key, g in pieces.items():
                d[key] = {"u": g.u.tolist(), "x": g.x.tolist(), "xdot": g.xdot.tolist()}
        return d


def limit_geodesic(M, f, data, *, u_min=-1.0, u_max=2.0, kink_rule="printed", tol=1e-11):
    """Broken geodesic and ``v`` jump data for ``data = (v0, vdot0, x0, xdot0)`` at ``u = -1``."""
    if kink_rule not in KINK_RULES:
        raise ValueError(f"unknown kink rule {kink_rule!r}; expected one of {KINK_RULES}")
    if u_max <= 0.0:
        raise ValueError("u_max must be positive")
    v0, vdot0, x0, xdot0 = data
    x0 = np.asarray(x0, dtype=float)
    xdot0 = np.asarray(xdot0, dtype=float)
    pre = background_geodesic(M, x0, xdot0, -1.0, 0.0, tol=tol)
    xc, vc = pre.at(0.0)
    xc, vc = np.asarray(xc), np.asarray(vc)
    g = grad_h(M, f, xc)
    refraction = 0.5 * g
    post = background_geodesic(M, xc, vc + refraction, 0.0, u_max, tol=tol)
    back = None
    if u_min < -1.0:
        back = background_geodesic(M, x0, xdot0, -1.0, u_min, tol=tol)
    df = f.partials(xc)
    printed = kink_slope("printed", vc, g, df)
    return BrokenGeodesic(
        pre=pre, post=post, back=back,
        cross_point=xc, cross_velocity_pre=vc, refraction=refraction,
        v0=float(v0), vdot0=float(vdot0),
        jump=-0.5 * f(xc),
        kink_slope=kink_slope(kink_rule, vc, g, df),
        kink_rule=kink_rule,
        kink_slope_printed=printed,
        kink_slope_ode=0.5 * printed,
        u_range=(min(u_min, -1.0), float(u_max)),
    )


def eval_limit(bg, u):
    """``(v_limit, x_limit)`` at ``u``."""
    return bg.v(u), bg.x(u)
