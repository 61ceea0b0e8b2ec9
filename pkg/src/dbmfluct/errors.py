"""Exception types raised across the package."""


class DbmError(Exception):
    """Base class for all package errors."""


class DomainError(DbmError, ValueError):
    """Evaluation point lies on (or numerically on) a support set."""


class SolverError(DbmError, ArithmeticError):
    """Newton inversion of the flow failed.

    Carries the last iterate and its residual so callers can report where
    the continuation broke down.
    """

    def __init__(self, message, last_iterate=None, residual=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual = residual


class CriticalPointError(DbmError, ArithmeticError):
    """The derivative of the flow map vanishes at the preimage."""


class DegenerateMapError(DbmError, ArithmeticError):
    """Schwarzian requested for a map with zero first derivative."""


class ContourError(DbmError, ArithmeticError):
    """Contour quadrature did not converge or failed its mass certificate."""

    def __init__(self, message, delta=None):
        super().__init__(message)
        self.delta = delta


class StiffStepError(DbmError, ArithmeticError):
    """Step halving exhausted without restoring particle order."""

    def __init__(self, message, min_gap=None):
        super().__init__(message)
        self.min_gap = min_gap


class ConfigError(DbmError, ValueError):
    """Aggregated run-configuration validation failure."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class MonteCarloError(DbmError, RuntimeError):
    """Too many replicas failed for the run to be trusted."""
