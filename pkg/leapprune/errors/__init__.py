from typing import Any

__all__ = (
    "BaseException",
    "DimensionError",
    "InputError",
    "UsageError",
    "NonFiniteError",
    "FormatError",
    "TrainingError",
    "ConfigurationError",
    "NotFileError",
    "NotDirectoryError",
    "NotWritableError",
    "FileAccessError",
    "error_payload"
)

class BaseException(Exception):
    """All errors raised by this library are subclassed from this class."""
    ...

class DimensionError(BaseException): ...
class InputError(BaseException): ...
class UsageError(BaseException): ...
class NonFiniteError(BaseException): ...
class FormatError(BaseException): ...
class TrainingError(BaseException): ...

class NotFileError(BaseException): ...
class NotDirectoryError(BaseException): ...
class NotWritableError(BaseException): ...
class FileAccessError(BaseException): ...

class ConfigurationError(BaseException):
    """
    Raised when a run configuration or a hyperparameter is invalid.

    Attributes:
        field (str | None): The offending configuration field, if known.
        line (int | None): The line of the configuration file, if known.
        reason (str): The message without the line and field prefixes.
    """

    def __init__(self, message: str, *, field: str | None = None, line: int | None = None) -> None:
        self.field = field
        self.line = line
        self.reason = message
        if field is not None:
            message = f"{field}: {message}"
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)

def error_payload(error: Exception) -> dict[str, Any]:
    """
    Convert an exception into the machine-readable payload printed by the CLI.

    Args:
        error (Exception): The exception to describe.

    Returns:
        dict[str, Any]: `error`, `message`, `field` and `line` keys.
    """
    return {
        "error": type(error).__name__,
        "message": str(error),
        "field": getattr(error, "field", None),
        "line": getattr(error, "line", None)
    }
