"""Exception types shared across the package."""


class IstaError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(IstaError, ValueError):
    """A domain object or argument violates one of its invariants."""


class FormatError(IstaError):
    """A binary artifact is malformed, truncated, or carries a foreign magic."""


class FitError(IstaError):
    """Model fitting cannot proceed on the given data."""


class ResourceError(IstaError):
    """A guard for test-scale-only computations was exceeded."""


class EvaluationError(IstaError):
    """Retrieval evaluation is undefined for the given ground truth."""


class NumericalError(IstaError):
    """A numerical routine produced non-finite or unusable output."""


class ConfigError(IstaError, ValueError):
    """A configuration file is malformed or holds an out-of-range value."""
