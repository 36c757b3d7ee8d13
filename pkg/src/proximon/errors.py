"""Exception types raised across the engine."""


class EngineError(Exception):
    """Base class for all errors raised by this package."""


class DetectionParseError(EngineError):
    """A detection record could not be parsed (bad field count or non-numeric field)."""

    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


class RejectedRecordError(EngineError):
    """A record parsed but describes an impossible box (non-positive extent)."""


class ConfigurationError(EngineError):
    """Invalid or missing configuration value."""


class SingularQuadError(EngineError):
    """Quadrilateral corners are collinear or otherwise degenerate."""


class HorizonError(EngineError):
    """A point or ray maps to or above the horizon, so no ground intersection exists."""


class NotVisibleError(EngineError):
    """A synthetic person falls outside the camera frustum."""


class NotEnoughDataError(EngineError):
    """Calibration sample set is too small or lacks depth diversity."""


class SequencingError(EngineError):
    """Frames arrived out of order."""


class UndefinedMetricError(EngineError):
    """A metric has no defined value (e.g. tracking accuracy with empty ground truth)."""


class FeedFaultedError(EngineError):
    """The feed worker hit an unrecoverable error; see the feed status for details."""
