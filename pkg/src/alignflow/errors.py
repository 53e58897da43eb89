"""Exception types raised across the package."""

from __future__ import annotations


class AlignflowError(Exception):
    """Base class for all package errors."""


class KernelError(AlignflowError):
    """Invalid kernel specification or a kernel invariant violation."""


class NoDiameterBoundError(KernelError):
    """The kernel is not heavy-tailed, so no a-priori flock diameter exists."""


class QuadratureError(AlignflowError):
    """Adaptive quadrature failed to reach the requested tolerance."""

    def __init__(self, message: str, achieved: float):
        super().__init__(f"{message} (achieved error estimate {achieved:.3e})")
        self.achieved = achieved


class MeasureError(AlignflowError):
    """Invalid mass measure or incompatible pair of measures."""


class ScenarioError(AlignflowError):
    """Invalid initial data."""


class SupercriticalError(ScenarioError):
    """The entropy e0 is negative somewhere, so trajectories cross in finite time."""

    def __init__(self, message: str, location: float, value: float,
                 crossing_time_bound: float):
        super().__init__(message)
        self.location = location
        self.value = value
        self.crossing_time_bound = crossing_time_bound


class IntegrationError(AlignflowError):
    """Time integration failed (step underflow or non-finite state)."""

    def __init__(self, message: str, last_state=None):
        super().__init__(message)
        self.last_state = last_state


class LimitError(AlignflowError):
    """The limiting flow map or measure could not be extracted reliably."""


class ConfigError(AlignflowError):
    """Run configuration failed schema validation."""
