"""Shared exception types.

Every stage raises one of these so the CLI can map failures onto its
exit-code contract (1 usage, 2 validation, 3 runtime).
"""


class LayoutPrefError(Exception):
    """Base class for all package errors."""


class ParameterError(LayoutPrefError):
    """An argument is out of range or malformed."""


class ValidationError(LayoutPrefError):
    """Input data violates a documented invariant."""


class GenerationError(LayoutPrefError):
    """A generator cannot satisfy its constraints at the requested size."""


class StructuralError(LayoutPrefError):
    """Structurally inconsistent inputs (shape mismatch, disconnected graph)."""


class GeometryError(LayoutPrefError):
    """Degenerate geometry (coincident points, zero-extent layout)."""


class TrainingError(LayoutPrefError):
    """A training run produced non-finite values or inconsistent state."""


class ContaminationError(LayoutPrefError):
    """A test-set evaluation touched data from the training side."""


class StageInputError(LayoutPrefError):
    """A pipeline stage is missing or has stale input artifacts."""


class ParseError(ValidationError):
    """A data file failed to parse; carries path and line context."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:"
            if line is not None:
                where += f"{line}:"
            where += " "
        super().__init__(where + message)
