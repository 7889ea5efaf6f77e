"""Shared exception types."""


class SpinocError(Exception):
    """Base class for all package errors."""


class ConfigurationError(SpinocError):
    """Invalid configuration: dimension mismatches, grid/envelope violations,
    incompatible mode/field combinations."""


class IntegrationError(SpinocError):
    """Time integration produced a non-finite state.

    Carries the last good time in ``failing_time`` and, for the phase-space
    integrators, the last finite state in ``last_state``.
    """

    def __init__(self, message, failing_time=None, last_state=None):
        super().__init__(message)
        self.failing_time = failing_time
        self.last_state = last_state


class DegenerateProblemError(SpinocError):
    """Problem has no usable solution as posed (e.g. gamma = gamma' = 0)."""
