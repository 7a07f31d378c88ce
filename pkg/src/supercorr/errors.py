"""Exception types shared across the package."""


class SupercorrError(Exception):
    """Base class for all package errors."""


class DomainError(SupercorrError, ValueError):
    """An argument lies outside the domain of an operation."""


class CapacityError(SupercorrError):
    """A request exceeds a configured size cap (e.g. exact solver emitter count)."""


class ParseError(SupercorrError, ValueError):
    """Malformed input file. ``line`` is the 1-based offending line, if known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class IntegrationError(SupercorrError, RuntimeError):
    """Time integration failed.

    ``t_last`` is the last successfully reached time and ``partial`` holds
    whatever trajectory was accumulated before the failure (may be None).
    """

    def __init__(self, message, t_last=0.0, partial=None):
        super().__init__(f"{message} (last good t={t_last:.6g})")
        self.t_last = t_last
        self.partial = partial
