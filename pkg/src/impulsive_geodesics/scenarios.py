"""Named scenarios shipped with the package.

Each entry is a raw configuration table, exactly what a TOML scenario file
would parse to. ``--config`` accepts these names as well as file paths.
"""

from __future__ import annotations

import copy
import math

SCENARIOS = {
    "flat-quadratic": {
        "id": "flat-quadratic",
        "manifold": {"name": "euclidean:2"},
        "profile": "x^2 - y^2",
        "data": {"v0": 0.0, "vdot0": 0.0, "x0": [1.0, 0.0], "xdot0": [0.0, 0.0]},
        "T": 2.0,
        "eps_grid": [1e-1, 1e-2, 1e-3, 1e-4],
        "sweep": {"test_functions": [{"kind": "bump", "support": [-0.5, 0.5], "label": "bump"}]},
    },
    "flat-crossing": {
        "id": "flat-crossing",
        "manifold": {"name": "euclidean:2"},
        "profile": "x^2 - y^2",
        "data": {"v0": 0.0, "vdot0": 0.0, "x0": [0.0, 0.0], "xdot0": [1.0, 0.0]},
        "T": 2.0,
        "eps_grid": [1e-1, 1e-2, 1e-3, 1e-4],
    },
    "linear-1d": {
        "id": "linear-1d",
        "manifold": {"name": "euclidean:1"},
        "profile": "2*x",
        "data": {"v0": 0.0, "vdot0": 0.0, "x0": [0.0], "xdot0": [0.0]},
        "T": 1.0,
        "eps": 1e-2,
    },
    "sphere-cos": {
        "id": "sphere-cos",
        "manifold": {"name": "sphere"},
        "profile": "cos(theta)",
        "data": {"v0": 0.0, "vdot0": 0.0, "x0": [math.pi / 2, -1.0], "xdot0": [0.0, 1.0]},
        "T": 1.0,
        "eps": 1e-3,
    },
    "half-plane-linear": {
        "id": "half-plane-linear",
        "manifold": {"name": "half-plane"},
        "profile": "x",
        "data": {"v0": 0.0, "vdot0": 0.0, "x0": [0.0, 1.0], "xdot0": [1.0, 0.0]},
        "T": 1.0,
        "eps": 1e-3,
    },
}


def get(name):
    """A fresh copy of the raw configuration of a shipped scenario."""
    try:
        return copy.deepcopy(SCENARIOS[name])
    except KeyError:
        raise KeyError(f"unknown scenario {name!r}; shipped: {sorted(SCENARIOS)}") from None
