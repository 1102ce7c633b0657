"""Exception types shared across the package."""


class CarDesignError(Exception):
    """Base class for all package errors."""


class ValidationError(CarDesignError):
    """Input violates a documented precondition or invariant."""


class UnknownCourseError(CarDesignError):
    """Course id is not one of the built-in courses."""


class LogFormatError(CarDesignError):
    """Session log is malformed. Carries the offending line index."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class ReplayError(CarDesignError):
    """Replay of a session log failed (version skew, truncation, mismatch)."""
