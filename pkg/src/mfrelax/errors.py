"""Exception hierarchy shared across the package."""


class MfrelaxError(Exception):
    """Base class for all package errors."""


class ConfigError(MfrelaxError):
    """Invalid configuration value or document."""


class EvaluationError(MfrelaxError):
    """Analytic field evaluation produced non-finite values."""


class LinearAlgebraError(MfrelaxError):
    """A linear solve or factorization failed."""


class FactorizationError(LinearAlgebraError):
    """Direct factorization failed (singular or badly conditioned matrix)."""


class SchurDegeneracyError(LinearAlgebraError):
    """The multiplier Schur complement is (numerically) singular.

    Happens near force-free steady states where the current is parallel to
    the magnetic field; the caller is expected to fall back to the reduced
    multiplier system.
    """


class NewtonError(MfrelaxError):
    """Newton iteration failed to converge; the step is rejected."""


class PreconditionError(MfrelaxError):
    """An operation was called with inputs violating its precondition."""


class InitializationError(MfrelaxError):
    """Initial-field construction (divergence cleaning) failed."""
