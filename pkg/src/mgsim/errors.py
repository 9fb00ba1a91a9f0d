"""Exception types raised across the package."""


class MGError(Exception):
    """Base class for all mgsim errors."""


class LatticeError(MGError, ValueError):
    """Grid dimensions are invalid or two fields live on different lattices."""


class GaugeViolationError(MGError, ValueError):
    """A field, forcing or wavevector carries a k3 = 0 component."""


class UnstableStepError(MGError, RuntimeError):
    """A time step produced non-finite or overflowing coefficients.

    ``mode`` is the wavevector of the first offending coefficient and
    ``partial`` optionally carries whatever trajectory was accumulated
    before the failure.
    """

    def __init__(self, message, mode=None, t=None, partial=None):
        super().__init__(message)
        self.mode = mode
        self.t = t
        self.partial = partial


class ConfigError(MGError, ValueError):
    """Configuration file could not be parsed or failed validation."""


class SnapshotError(MGError, ValueError):
    """A snapshot file is corrupt, truncated or violates field invariants."""


class DiagnosticError(MGError, ValueError):
    """Diagnostic inputs do not cover the requested window."""
