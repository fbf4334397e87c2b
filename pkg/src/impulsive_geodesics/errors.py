"""Exception hierarchy shared by every module of the package."""


class ImpulsiveGeodesicError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(ImpulsiveGeodesicError):
    """A point lies outside the chart domain."""


class GeometryError(ImpulsiveGeodesicError):
    """A metric evaluation is not symmetric positive-definite."""


class DifferentiationError(ImpulsiveGeodesicError):
    """A finite-difference stencil leaves the chart domain."""


class ChartExitError(ImpulsiveGeodesicError):
    """A curve left the chart domain during integration."""

    def __init__(self, message, u_exit=None):
        super().__init__(message)
        self.u_exit = u_exit


class IntegratorError(ImpulsiveGeodesicError):
    """Step-size collapse or step budget exhausted."""


class ParameterError(ImpulsiveGeodesicError):
    """A regularisation parameter is out of range."""


class QuadratureError(ImpulsiveGeodesicError):
    """An adaptive quadrature failed to converge."""


class RangeError(ImpulsiveGeodesicError):
    """Evaluation requested outside the integrated parameter range."""


class ExpressionError(ImpulsiveGeodesicError):
    """An expression uses syntax outside the supported grammar."""


class ConfigError(ImpulsiveGeodesicError):
    """A scenario configuration is invalid.

    ``key`` holds the dotted path of the offending entry.
    """

    def __init__(self, message, key=None):
        super().__init__(message if key is None else f"{key}: {message}")
        self.key = key
