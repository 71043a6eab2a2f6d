"""Exception hierarchy shared by every module and mapped to CLI exit codes."""


class DuopanoError(Exception):
    """Base class for all package errors."""


class DomainError(DuopanoError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ShapeError(DuopanoError, ValueError):
    """Array shapes or channel counts are inconsistent."""


class DataError(DuopanoError, ValueError):
    """Input data is malformed, e.g. contains non-finite values."""


class FormatError(DataError):
    """A file on disk does not follow its documented format."""


class TrainingError(DuopanoError, RuntimeError):
    """Numerical failure during training or a forward pass."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step
