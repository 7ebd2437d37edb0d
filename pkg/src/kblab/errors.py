"""Exception hierarchy. The CLI maps these onto process exit codes."""


class KblabError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ValidationError(KblabError):
    """Configuration or input outside an operation's domain."""

    exit_code = 2


class SizeGuardError(ValidationError):
    """Requested enumeration exceeds the hard term-count cap."""


class CertificateError(KblabError):
    """Series evaluation requested outside its certified time range.

    The failed certificate rides along so callers can still inspect or
    persist it.
    """

    exit_code = 3

    def __init__(self, message: str, certificate=None):
        super().__init__(message)
        self.certificate = certificate


class NumericalError(KblabError):
    """Computation failed for numerical (not configuration) reasons."""

    exit_code = 4


class ResolutionError(NumericalError):
    """Grid or mode count cannot resolve the requested computation."""


class DiscretizationError(NumericalError):
    """Discrete solve produced something the continuum problem forbids."""


class StabilityError(NumericalError):
    """Explicit time stepping left its stability region."""


class RangeError(NumericalError):
    """An intermediate value overflowed double precision; rescale the input."""
