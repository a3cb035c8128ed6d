"""Exception types shared across the package."""

from __future__ import annotations


class DomainError(ValueError):
    """An argument lies outside the domain of the requested quantity."""


class UnsupportedCapability(NotImplementedError):
    """The model does not carry the closed form or construction being asked for."""


class AdmissibilityError(ValueError):
    """A weight function is not admissible for the model it is paired with."""


class DegenerateExperiment(RuntimeError):
    """A Monte Carlo estimate cannot be formed (e.g. zero denominator)."""


class NumericalError(ArithmeticError):
    """A quadrature or inversion did not reach its tolerance.

    ``achieved`` carries the error estimate that was actually attained.
    """

    def __init__(self, message: str, achieved: float | None = None):
        super().__init__(message)
        self.achieved = achieved


class UsageError(ValueError):
    """Malformed spec string or run configuration."""

    def __init__(self, message: str, token: str | None = None):
        super().__init__(message if token is None else f"{message}: {token!r}")
        self.token = token
