"""Shared exception types."""


class SwarmcoalError(Exception):
    pass


class DegeneratePopulationError(SwarmcoalError):
    """Raised when a population quantity that must be positive is zero/empty."""


class NoProgressError(SwarmcoalError):
    """Raised when some queue has zero total departure rate (stuck chain)."""


class ConvergenceError(SwarmcoalError):
    """Fixed-point iteration failed to reach tolerance within max_iter."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class ScenarioError(SwarmcoalError):
    """Invalid scenario/configuration input."""
