"""Exception hierarchy shared across the package."""

from __future__ import annotations


class DriftGPError(Exception):
    """Base class for all errors raised by this package."""


class ParameterDomainError(DriftGPError, ValueError):
    """A model parameter is outside its admissible domain."""


class CapabilityError(DriftGPError):
    """The requested operation is not defined for this model family."""


class DegenerateVarianceError(DriftGPError):
    """An increment variance collapsed to (numerically) zero.

    This quantity sits in the denominator of the local-Gauss objective and of
    the moment ratio statistics, so a zero is raised instead of propagated.
    """


class SimulationError(DriftGPError):
    """Exact path sampling failed for the requested grid/kernel."""


class NumericalError(DriftGPError):
    """A numerical routine failed to converge or produced non-finite values."""


class RootNotFoundError(NumericalError):
    """A Z-estimator root search failed; carries bracket diagnostics."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class UnidentifiableError(DriftGPError):
    """The data/model combination cannot identify the requested parameter."""


class ConfigError(DriftGPError):
    """Invalid or unknown configuration input."""
