"""Exception hierarchy for slabguide.

Every error raised on purpose by the library derives from SlabguideError and
carries the process exit code the runner should use for it.
"""

from typing import Optional


class SlabguideError(Exception):
    """Base class for deliberate library errors."""

    exit_code = 1


class DomainError(SlabguideError, ValueError):
    """An argument lies outside the domain of the operation."""

    exit_code = 2


class ConfigError(DomainError):
    """A scenario file failed validation.

    ``issues`` is a list of dicts with ``field`` (dotted path) and ``issue``.
    """

    def __init__(self, issues: list[dict]):
        self.issues = issues
        lines = [f"{i['field']}: {i['issue']}" for i in issues]
        super().__init__("invalid scenario:\n  " + "\n  ".join(lines))


class NumericalError(SlabguideError, ArithmeticError):
    """A numerical procedure did not reach its target accuracy."""

    exit_code = 3

    def __init__(self, message: str, estimate: Optional[float] = None):
        self.estimate = estimate
        if estimate is not None:
            message = f"{message} (achieved estimate {estimate:.3e})"
        super().__init__(message)


class DivergenceError(NumericalError):
    """The fixed-point iteration stopped contracting."""

    exit_code = 4

    def __init__(self, message: str, trace):
        self.trace = trace
        super().__init__(message)


def exit_code_for(exc: BaseException) -> int:
    """Return the exit code for *exc* (1 for anything unexpected)."""
    if isinstance(exc, SlabguideError):
        return exc.exit_code
    return 1
