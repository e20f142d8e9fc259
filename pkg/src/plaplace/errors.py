"""Exception types shared across the package."""


class PlaplaceError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(PlaplaceError, ValueError):
    """An argument is outside the range an operation is defined for."""


class UnsupportedOperationError(PlaplaceError):
    """The operation is not defined on this kind of domain."""


class FormatError(PlaplaceError, ValueError):
    """A serialized field or a domain file does not match its format."""


class ConfigError(PlaplaceError, ValueError):
    """A run configuration is malformed (unknown key, bad value, bad section)."""


class NonConvergenceError(PlaplaceError, RuntimeError):
    """An iterative method hit its cap without meeting its tolerance."""


class ContractionError(NonConvergenceError):
    """The inner fixed-point map failed to contract."""


class DivergenceError(NonConvergenceError):
    """The outer iteration diverged (energy kept increasing)."""


class LineSearchError(NonConvergenceError):
    """A backtracking line search could not find a decreasing step."""
