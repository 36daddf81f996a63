"""Exception hierarchy.

Subclasses of ``ValueError`` are raised for bad inputs so that callers who
only care about "invalid argument" can catch the builtin.
"""


class RepcsError(Exception):
    """Base class for all package errors."""


class DimensionError(RepcsError, ValueError):
    """Two tensors that must share a shape do not."""


class DomainError(RepcsError, ValueError):
    """A parameter lies outside the domain where the operation is defined."""


class ArgumentError(RepcsError, ValueError):
    """A required argument is missing or malformed."""


class ParseError(RepcsError, ValueError):
    """A serialized record could not be decoded."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ConfigurationError(RepcsError):
    """Run configuration is inconsistent (missing artifact, stale calibration, ...)."""


class TransportError(RepcsError):
    """A backend request failed in a way that may succeed on retry."""


class CapabilityError(RepcsError):
    """The backend does not expose what the detector needs (e.g. log-probs)."""
