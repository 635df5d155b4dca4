"""Exception hierarchy shared by every stage of the calibration pipeline."""


class StimcalError(Exception):
    """Base class for all package errors."""


class UsageError(StimcalError, ValueError):
    """A caller violated an operation's precondition."""


class DomainError(UsageError):
    """Non-finite or out-of-domain numeric input."""


class ConfigError(UsageError):
    """A run configuration failed validation."""


class NumericalError(StimcalError, ArithmeticError):
    """A numerical routine did not reach its requested tolerance."""

    def __init__(self, message, achieved=None, requested=None):
        super().__init__(message)
        self.achieved = achieved
        self.requested = requested


class DegenerateInputError(StimcalError, ValueError):
    """Input carries no usable signal for the requested estimate."""


class TraceFormatError(StimcalError, ValueError):
    """A binary trace or event file could not be parsed."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class StageError(StimcalError):
    """Wraps a failure inside one pipeline stage with a remediation hint."""

    def __init__(self, stage, cause, hint=""):
        text = f"[{stage}] {cause}"
        if hint:
            text += f" -- hint: {hint}"
        super().__init__(text)
        self.stage = stage
        self.cause = cause
        self.hint = hint
