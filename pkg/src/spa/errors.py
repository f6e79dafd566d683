"""Exception types shared across the package."""


class SpaError(Exception):
    """Base class for every error raised by this package."""


class ParseError(SpaError):
    """A file could not be parsed; carries the offending line number."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class MissingDataError(SpaError):
    """A spectrum contains missing or non-finite intensities.

    This is the defined signal of validate_for_prediction, not a failure of
    the operation: prediction must stop instead of imputing.
    """

    def __init__(self, indices, context=""):
        self.indices = tuple(int(i) for i in indices)
        where = f" in {context}" if context else ""
        super().__init__(
            f"missing or non-finite intensities{where} at channel indices {list(self.indices)}"
        )


class ParameterError(SpaError, ValueError):
    """An argument is outside its documented range."""


class DegenerateInputError(SpaError):
    """Input data is degenerate for the requested operation (e.g. an all-zero spectrum)."""


class DegenerateObjectiveError(SpaError):
    """The class-correlation vector vanishes; no direction separates the classes."""


class PipelineOrderError(SpaError):
    """An operation was called before its prerequisite preprocessing stage."""


class UndefinedMetricError(SpaError):
    """A confusion-matrix metric has a zero denominator."""


class FoldDegenerateError(SpaError):
    """A cross-validation training fold contains a single class."""


class PipelineStageError(SpaError):
    """Wraps an error raised inside a named pipeline stage."""

    def __init__(self, stage, cause):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause
