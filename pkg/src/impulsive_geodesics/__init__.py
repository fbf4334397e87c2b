"""Geodesics of impulsive N-fronted waves with parallel rays.

The impulsive profile ``f(x) delta(u)`` is replaced by ``f(x) delta_eps(u)``
for a strict delta net; the regularised geodesics are integrated and compared
with their closed-form limit, a broken geodesic of the base manifold.
"""

from .asymptotics import (association_pairing, gronwall_bykov_bound, moderateness_probe,
                          net_independence, stability_probe, sweep)
from .dynamics import (GeodesicState, IntegratorConfig, Trajectory, existence_interval_alpha,
                       integrate, rhs, verify_lemma_bounds)
from .errors import (ChartExitError, ConfigError, DomainError, GeometryError,
                     ImpulsiveGeodesicError, IntegratorError, ParameterError)
from .impulse import DeltaNet, eval_delta, net, profile, validate_strict
from .limit_oracle import BrokenGeodesic, eval_limit, limit_geodesic
from .manifold import ChartManifold, background_geodesic, builtin, custom, grad_h

__all__ = [
    "BrokenGeodesic", "ChartExitError", "ChartManifold", "ConfigError", "DeltaNet", "DomainError",
    "GeodesicState", "GeometryError", "ImpulsiveGeodesicError", "IntegratorConfig",
    "IntegratorError", "ParameterError", "Trajectory", "association_pairing",
    "background_geodesic", "builtin", "custom", "eval_delta", "eval_limit",
    "existence_interval_alpha", "grad_h", "gronwall_bykov_bound", "integrate", "limit_geodesic",
    "moderateness_probe", "net", "net_independence", "profile", "rhs", "stability_probe",
    "sweep", "validate_strict", "verify_lemma_bounds",
]
__version__ = "0.1.0"
