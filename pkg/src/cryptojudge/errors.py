"""Error types shared across the pipeline.

Every error names the module it came from so the CLI can report a single
machine-parseable line without a traceback.
"""

from typing import Any


class PipelineError(Exception):
    """Base class for all pipeline failures."""

    exit_code: int = 1

    def __init__(self, message: str, *, origin: str):
        super().__init__(message)
        self.message = message
        self.origin = origin


class InputError(PipelineError):
    """A fixture or artifact is missing or cannot be parsed."""

    exit_code = 2

    def __init__(
        self,
        message: str,
        *,
        origin: str,
        path: str | None = None,
        line: int | None = None,
    ):
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(f"{where}{message}", origin=origin)
        self.path = path
        self.line = line


class ConfigError(PipelineError):
    """Unknown configuration key or invalid value."""

    exit_code = 2


class InvariantError(PipelineError, ValueError):
    """An argument or record violates a documented invariant."""


class DataGapError(PipelineError):
    """A required (asset, date) record is absent."""

    def __init__(self, message: str, *, origin: str, asset: str, day: Any):
        super().__init__(message, origin=origin)
        self.asset = asset
        self.day = day


class DegenerateError(PipelineError):
    """The input admits no well-defined answer (zero variance, ties, ...)."""


class DivergenceError(PipelineError):
    """A training loss went non-finite; carries the parameters at failure."""

    def __init__(self, message: str, *, origin: str, snapshot: dict[str, Any]):
        super().__init__(message, origin=origin)
        self.snapshot = snapshot
