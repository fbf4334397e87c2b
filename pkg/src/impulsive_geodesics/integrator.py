"""Dormand-Prince 5(4) integrator with quintic Hermite dense output.

The stepper is written for small smooth systems where each right-hand side
call is cheap; it keeps every accepted step so the caller can rebuild the
trajectory by dense output afterwards.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import IntegratorError, RangeError

C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
B = A[6]
# difference between the 5th and embedded 4th order weights
E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0


@dataclass
class RawSolution:
    t: list
    y: list
    f: list
    stats: dict = field(default_factory=dict)


def _rms(v):
    return math.sqrt(float(np.mean(v * v)))


def _initial_step(fun, t0, y0, f0, direction, rtol, atol, max_step):
    scale = atol + rtol * np.abs(y0)
    d0, d1 = _rms(y0 / scale), _rms(f0 / scale)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, max_step)
    y1 = y0 + direction * h0 * f0
    f1 = fun(t0 + direction * h0, y1)
    d2 = _rms((f1 - f0) / scale) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1, max_step)


def dopri5(fun, t0, y0, t1, *, rtol=1e-10, atol=1e-12, max_step=np.inf,
           max_steps=1_000_000, check=None, f0=None):
    """Integrate ``y' = fun(t, y)`` from ``t0`` to ``t1`` (either direction).

    ``check(t, y)`` is called after every accepted step and may raise to abort.
    Returns a RawSolution holding every accepted mesh point with its slope,
    plus step statistics.
    """
    y = np.array(y0, dtype=float)
    t = float(t0)
    t1 = float(t1)
    direction = 1.0 if t1 >= t else -1.0
    span = abs(t1 - t)
    max_step = min(float(max_step), span) if span > 0 else float(max_step)
    f = fun(t, y) if f0 is None else np.asarray(f0, dtype=float)
    nfev = 1 if f0 is None else 0
    ts, ys, fs = [t], [y.copy()], [f.copy()]
    stats = {"accepted": 0, "rejected": 0, "nfev": nfev, "min_step": math.inf, "max_step": 0.0}
    if span == 0.0:
        stats["min_step"] = 0.0
        return RawSolution(ts, ys, fs, stats)

    h = _initial_step(fun, t, y, f, direction, rtol, atol, max_step)
    stats["nfev"] += 1
    K = np.empty((7, y.size))
    steps = 0
    while direction * (t1 - t) > 0.0:
        if steps >= max_steps:
            raise IntegratorError(f"step budget of {max_steps} exhausted at t={t:.6g}")
        min_h = 16.0 * np.spacing(max(abs(t), 1.0))
        if h < min_h:
            raise IntegratorError(f"step size collapsed to {h:.3g} at t={t:.6g}")
        last = False
        if h >= abs(t1 - t):
            h = abs(t1 - t)
            last = True
        hs = direction * h
        K[0] = f
        for s in range(1, 7):
            K[s] = fun(t + C[s] * hs, y + hs * (A[s] @ K[:s]))
        stats["nfev"] += 6
        y_new = y + hs * (B @ K[:6])
        f_new = K[6].copy()
        err_vec = hs * (E @ K)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err = _rms(err_vec / scale)
        steps += 1
        if err <= 1.0:
            t_new = t1 if last else t + hs
            if check is not None:
                check(t_new, y_new)
            t, y, f = t_new, y_new, f_new
            ts.append(t)
            ys.append(y.copy())
            fs.append(f.copy())
            stats["accepted"] += 1
            stats["min_step"] = min(stats["min_step"], h)
            stats["max_step"] = max(stats["max_step"], h)
            factor = MAX_FACTOR if err == 0.0 else min(MAX_FACTOR, SAFETY * err ** -0.2)
            h = min(h * max(factor, MIN_FACTOR), max_step)
        else:
            stats["rejected"] += 1
            h *= max(MIN_FACTOR, SAFETY * err ** -0.2)
    return RawSolution(ts, ys, fs, stats)


def concatenate(pieces):
    """Join consecutive RawSolutions sharing their boundary points."""
    first = pieces[0]
    out = RawSolution(list(first.t), list(first.y), list(first.f), dict(first.stats))
    for p in pieces[1:]:
        out.t.extend(p.t[1:])
        out.y.extend(p.y[1:])
        out.f.extend(p.f[1:])
        for key in ("accepted", "rejected", "nfev"):
            out.stats[key] += p.stats[key]
        out.stats["min_step"] = min(out.stats["min_step"], p.stats["min_step"])
        out.stats["max_step"] = max(out.stats["max_step"], p.stats["max_step"])
    return out


def _hermite_basis(s):
    s2 = s * s
    s3 = s2 * s
    s4 = s3 * s
    s5 = s4 * s
    h00 = 1 - 10 * s3 + 15 * s4 - 6 * s5
    h10 = s - 6 * s3 + 8 * s4 - 3 * s5
    h20 = 0.5 * s2 - 1.5 * s3 + 1.5 * s4 - 0.5 * s5
    h21 = 0.5 * s3 - s4 + 0.5 * s5
    h11 = -4 * s3 + 7 * s4 - 3 * s5
    h01 = 10 * s3 - 15 * s4 + 6 * s5
    return h00, h10, h20, h21, h11, h01


def _hermite_basis_ds(s):
    s2 = s * s
    s3 = s2 * s
    s4 = s3 * s
    h00 = -30 * s2 + 60 * s3 - 30 * s4
    h10 = 1 - 18 * s2 + 32 * s3 - 15 * s4
    h20 = s - 4.5 * s2 + 6 * s3 - 2.5 * s4
    h21 = 1.5 * s2 - 4 * s3 + 2.5 * s4
    h11 = -12 * s2 + 28 * s3 - 15 * s4
    h01 = 30 * s2 - 60 * s3 + 30 * s4
    return h00, h10, h20, h21, h11, h01


@dataclass(frozen=True)
class DenseSolution:
    """Mesh values ``y``, slopes ``f`` and second derivatives ``a``.

    The mesh is stored in increasing ``t``. Evaluation between mesh points is
    quintic Hermite interpolation, which matches the fifth-order stepper.
    """

    t: np.ndarray
    y: np.ndarray
    f: np.ndarray
    a: np.ndarray

    @classmethod
    def build(cls, raw, second_derivative):
        t = np.asarray(raw.t, dtype=float)
        y = np.asarray(raw.y, dtype=float)
        f = np.asarray(raw.f, dtype=float)
        a = np.array([second_derivative(ti, yi) for ti, yi in zip(t, y)])
        if t.size > 1 and t[-1] < t[0]:
            t, y, f, a = t[::-1], y[::-1], f[::-1], a[::-1]
        return cls(t, y, f, a)

    def _locate(self, tq):
        tq = np.asarray(tq, dtype=float)
        lo, hi = self.t[0], self.t[-1]
        pad = 1e-12 * max(1.0, abs(lo), abs(hi))
        if np.any(tq < lo - pad) or np.any(tq > hi + pad):
            raise RangeError(f"evaluation outside integrated range [{lo:.6g}, {hi:.6g}]")
        idx = np.clip(np.searchsorted(self.t, tq, side="right") - 1, 0, self.t.size - 2)
        h = self.t[idx + 1] - self.t[idx]
        s = (tq - self.t[idx]) / h
        return tq, idx, h, s

    def __call__(self, tq):
        """State at ``tq`` (scalar or 1-d array)."""
        scalar = np.ndim(tq) == 0
        tq, i, h, s = self._locate(np.atleast_1d(tq))
        b = _hermite_basis(s)
        h = h[:, None]
        out = (b[0][:, None] * self.y[i] + b[1][:, None] * h * self.f[i]
               + b[2][:, None] * h * h * self.a[i] + b[3][:, None] * h * h * self.a[i + 1]
               + b[4][:, None] * h * self.f[i + 1] + b[5][:, None] * self.y[i + 1])
        return out[0] if scalar else out

    def derivative(self, tq):
        scalar = np.ndim(tq) == 0
        tq, i, h, s = self._locate(np.atleast_1d(tq))
        b = _hermite_basis_ds(s)
        h = h[:, None]
        out = (b[0][:, None] * self.y[i] / h + b[1][:, None] * self.f[i]
               + b[2][:, None] * h * self.a[i] + b[3][:, None] * h * self.a[i + 1]
               + b[4][:, None] * self.f[i + 1] + b[5][:, None] * self.y[i + 1] / h)
        return out[0] if scalar else out
