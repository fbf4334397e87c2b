"""Scenario configuration files.

One scenario per file, TOML (or the equivalent JSON, which is what reports
embed). Every key has a default except the manifold, the profile and the
data. Dotted-path overrides (``integrator.rel_tol=1e-9``) are applied before
validation, so an error always names the key as written by the user.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import impulse, manifold
from .asymptotics import TestFunction, geometric_grid
from .dynamics import IntegratorConfig
from .errors import ConfigError, ExpressionError
from .limit_oracle import KINK_RULES

DEFAULTS = {
    "id": "scenario",
    "seed": 0,
    "T": 1.0,
    "eps": 1e-3,
    "eps_grid": None,
    "net": "bump",
    "kink_rule": "printed",
    "output": "out",
    "jobs": 1,
    "manifold": {},
    "profile": None,
    "data": {"u0": -1.0},
    "integrator": {
        "rel_tol": 1e-10,
        "abs_tol": 1e-12,
        "max_step": 0.05,
        "impulse_refine": 16.0,
        "min_eps": 1e-6,
    },
    "sweep": {
        "v_points": [-0.5, 0.5, 1.0],
        "tolerances": {"x": 0.05, "v": 0.05, "jump": 0.05, "pairing": 0.05},
        "test_functions": [],
    },
    "validate": {"eps_list": [1.0, 0.1, 0.01, 0.001, 0.0001], "quad_tol": 1e-8},
}

_KNOWN = {
    "": set(DEFAULTS),
    "manifold": {"name", "coords", "metric", "bounds", "fd_step", "margin"},
    "data": {"v0", "vdot0", "x0", "xdot0", "u0"},
    "integrator": set(DEFAULTS["integrator"]),
    "sweep": set(DEFAULTS["sweep"]),
    "sweep.tolerances": set(DEFAULTS["sweep"]["tolerances"]),
    "validate": set(DEFAULTS["validate"]),
}


def parse_eps_grid(text):
    """``"start:stop:count"`` -> geometric list."""
    parts = str(text).split(":")
    if len(parts) != 3:
        raise ConfigError("expected start:stop:count", "eps_grid")
    try:
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise ConfigError(f"cannot parse {text!r} as start:stop:count", "eps_grid") from None
    if count < 1 or not (start > 0.0 and stop > 0.0):
        raise ConfigError("start and stop must be positive and count at least 1", "eps_grid")
    return geometric_grid(start, stop, count)


def _parse_value(text):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_override(raw, assignment):
    """Apply ``a.b.c=value`` to the nested dict ``raw`` in place."""
    key, sep, value = assignment.partition("=")
    key = key.strip()
    if not sep or not key:
        raise ConfigError(f"override {assignment!r} is not of the form key=value")
    node = raw
    parts = key.split(".")
    for p in parts[:-1]:
        nxt = node.setdefault(p, {})
        if not isinstance(nxt, dict):
            raise ConfigError("cannot descend into a non-table value", key)
        node = nxt
    node[parts[-1]] = _parse_value(value.strip())
    return raw


def load_raw(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from None
    try:
        if path.suffix == ".json":
            return json.loads(text)
        return tomllib.loads(text)
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot parse {path.name}: {exc}") from None


def _merge(defaults, given, prefix=""):
    out = copy.deepcopy(defaults)
    known = _KNOWN.get(prefix)
    for k, v in given.items():
        path = f"{prefix}.{k}" if prefix else k
        if known is not None and k not in known:
            raise ConfigError("unknown key", path)
        if isinstance(out.get(k), dict) and k != "manifold" and path in _KNOWN:
            if not isinstance(v, dict):
                raise ConfigError("expected a table", path)
            out[k] = _merge(out[k], v, path)
        else:
            out[k] = v
    return out


def _number(value, key, positive=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"expected a number, got {value!r}", key)
    value = float(value)
    if not math.isfinite(value) or (positive and value <= 0):
        raise ConfigError(f"expected a finite{' positive' if positive else ''} number, got {value!r}", key)
    return value


def _vector(value, key, dim):
    if not isinstance(value, (list, tuple)):
        raise ConfigError("expected an array", key)
    if len(value) != dim:
        raise ConfigError(f"expected {dim} components to match the manifold dimension, got {len(value)}", key)
    return [_number(v, f"{key}[{i}]") for i, v in enumerate(value)]


@dataclass
class Scenario:
    """A validated scenario with its engine objects built."""

    raw: dict
    manifold: object
    profile: object
    net: object
    data: tuple
    T: float
    eps: float
    eps_grid: list
    integrator: IntegratorConfig
    test_functions: list

    @property
    def id(self):
        return self.raw["id"]

    def digest(self):
        blob = json.dumps(self.raw, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _build_manifold(spec):
    if not isinstance(spec, dict) or "name" not in spec:
        raise ConfigError("a manifold name is required", "manifold.name")
    name = spec["name"]
    if not isinstance(name, str):
        raise ConfigError("expected a string", "manifold.name")
    if name == "custom":
        for k in ("coords", "metric"):
            if k not in spec:
                raise ConfigError("required for custom manifolds", f"manifold.{k}")
        try:
            return manifold.custom(spec["coords"], spec["metric"], spec.get("bounds"),
                                   fd_step=float(spec.get("fd_step", manifold.DEFAULT_FD_STEP)))
        except (ExpressionError, ValueError, TypeError) as exc:
            raise ConfigError(str(exc), "manifold.metric") from None
    try:
        if name == "sphere" and "margin" in spec:
            return manifold.builtin(name, margin=_number(spec["margin"], "manifold.margin", True))
        return manifold.builtin(name)
    except ValueError as exc:
        raise ConfigError(str(exc), "manifold.name") from None


def _build_test_functions(items):
    out = []
    for i, item in enumerate(items):
        key = f"sweep.test_functions[{i}]"
        if not isinstance(item, dict) or "support" not in item:
            raise ConfigError("each test function needs a support = [a, b]", key)
        sup = item["support"]
        if not (isinstance(sup, list) and len(sup) == 2):
            raise ConfigError("support must be [a, b]", f"{key}.support")
        a, b = _number(sup[0], f"{key}.support[0]"), _number(sup[1], f"{key}.support[1]")
        try:
            if item.get("kind", "expr") == "bump":
                out.append(TestFunction.bump(a, b, item.get("label")))
            else:
                if "expr" not in item:
                    raise ConfigError("expression required unless kind = 'bump'", f"{key}.expr")
                out.append(TestFunction(item["expr"], (a, b), item.get("label")))
        except (ExpressionError, ValueError) as exc:
            raise ConfigError(str(exc), key) from None
    return out


def resolve(raw):
    """Fill defaults, validate and build engine objects."""
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a table")
    cfg = _merge(DEFAULTS, raw)
    M = _build_manifold(cfg["manifold"])
    if cfg["profile"] is None:
        raise ConfigError("a wave profile expression is required", "profile")
    if isinstance(cfg["profile"], (int, float)) and not isinstance(cfg["profile"], bool):
        # a constant profile given as a number, e.g. --set profile=0
        cfg["profile"] = repr(cfg["profile"])
    if not isinstance(cfg["profile"], str):
        raise ConfigError("expected an expression string", "profile")
    try:
        f = impulse.profile(cfg["profile"], M)
    except ExpressionError as exc:
        raise ConfigError(str(exc), "profile") from None
    try:
        net = impulse.net(cfg["net"])
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc), "net") from None
    if cfg["kink_rule"] not in KINK_RULES:
        raise ConfigError(f"expected one of {list(KINK_RULES)}", "kink_rule")

    d = cfg["data"]
    for k in ("x0", "xdot0"):
        if k not in d:
            raise ConfigError("required", f"data.{k}")
    x0 = _vector(d["x0"], "data.x0", M.dim)
    xdot0 = _vector(d["xdot0"], "data.xdot0", M.dim)
    v0 = _number(d.get("v0", 0.0), "data.v0")
    vdot0 = _number(d.get("vdot0", 0.0), "data.vdot0")
    u0 = _number(d.get("u0", -1.0), "data.u0")
    if not M.contains(np.array(x0)):
        raise ConfigError(f"point {x0} outside the chart domain of {M.name}", "data.x0")

    ic = cfg["integrator"]
    try:
        integ = IntegratorConfig(
            rel_tol=_number(ic["rel_tol"], "integrator.rel_tol", True),
            abs_tol=_number(ic["abs_tol"], "integrator.abs_tol", True),
            max_step=_number(ic["max_step"], "integrator.max_step", True),
            impulse_refine=_number(ic["impulse_refine"], "integrator.impulse_refine", True),
            min_eps=_number(ic["min_eps"], "integrator.min_eps", True),
        )
    except ValueError as exc:
        raise ConfigError(str(exc), "integrator") from None

    eps = _number(cfg["eps"], "eps", True)
    grid = cfg["eps_grid"]
    if isinstance(grid, str):
        grid = parse_eps_grid(grid)
        cfg["eps_grid"] = grid
    if grid is not None:
        if not isinstance(grid, list) or not grid:
            raise ConfigError("expected a non-empty array or 'start:stop:count'", "eps_grid")
        grid = [_number(e, f"eps_grid[{i}]", True) for i, e in enumerate(grid)]
    for key, values in (("eps", [eps]), ("eps_grid", grid or [])):
        for e in values:
            if not (integ.min_eps < e <= 1.0):
                raise ConfigError(f"eps={e!r} outside ({integ.min_eps:g}, 1]", key)
    T = _number(cfg["T"], "T", True)
    reach = net.support_radius * max([eps] + (grid or []))
    if u0 > -reach:
        raise ConfigError(f"data must be posed before the pulse (u0 <= {-reach:g})", "data.u0")
    if not isinstance(cfg["jobs"], int) or cfg["jobs"] < 1:
        raise ConfigError("expected a positive integer", "jobs")
    if not isinstance(cfg["seed"], int):
        raise ConfigError("expected an integer", "seed")
    if not isinstance(cfg["id"], str) or not cfg["id"] or "/" in cfg["id"]:
        raise ConfigError("expected a non-empty name without '/'", "id")
    tfs = _build_test_functions(cfg["sweep"]["test_functions"])
    data = translate_data(M, (v0, vdot0, np.array(x0), np.array(xdot0)), u0)
    return Scenario(cfg, M, f, net, data, T, eps, grid or [eps], integ, tfs)


def translate_data(M, data, u0):
    """Carry data posed at ``u0 <= -eps`` to ``u = -1`` along the unforced flow."""
    v0, vdot0, x0, xdot0 = data
    if u0 == -1.0:
        return (v0, vdot0, x0, xdot0)
    g = manifold.background_geodesic(M, x0, xdot0, u0, -1.0, tol=1e-12)
    x, xd = g.at(-1.0)
    return (v0 + vdot0 * (-1.0 - u0), vdot0, np.asarray(x), np.asarray(xd))


def load(path, overrides=()):
    raw = load_raw(path)
    for o in overrides:
        apply_override(raw, o)
    return resolve(raw)
