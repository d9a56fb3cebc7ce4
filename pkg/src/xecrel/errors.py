"""Exception hierarchy. CLI exit codes are keyed off these classes."""


class XecrelError(Exception):
    """Base class for all library errors."""


class ConfigError(XecrelError, ValueError):
    """Invalid configuration or input document.

    ``path`` names the offending field (dotted) or file when known.
    """

    def __init__(self, message, path=None):
        super().__init__(message)
        self.path = path


class TraceError(ConfigError):
    """Observation trace violates its declared bounds or is degenerate."""


class QuadratureError(XecrelError, ArithmeticError):
    """Adaptive quadrature did not reach the requested tolerance."""


class ConvergenceError(XecrelError, ArithmeticError):
    """An iterative solver ran out of budget; ``best`` holds the last iterate."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class InfeasibleError(XecrelError):
    """No admissible solution exists for the requested configuration."""


class OutputError(XecrelError, OSError):
    """An artifact could not be written."""
