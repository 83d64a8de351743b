"""Exception types shared across the toolkit."""


class EdofError(Exception):
    """Base class for all toolkit errors."""


class ParameterError(EdofError, ValueError):
    """An argument violates a documented precondition."""


class FormatError(EdofError):
    """Unsupported or malformed image file content."""


class DegenerateHomographyError(EdofError):
    """A homography maps an image corner to (or past) the plane at infinity."""


class EstimationError(EdofError):
    """Robust model fitting failed to produce an acceptable model."""

    def __init__(self, message: str, view_index: int | None = None):
        super().__init__(message)
        self.view_index = view_index


class AlignmentError(EdofError):
    """One or more views of a grid could not be aligned."""

    def __init__(self, message: str, failed_views: tuple[int, ...] = ()):
        super().__init__(message)
        self.failed_views = tuple(failed_views)


class SelectionError(EdofError):
    """Too few eligible views to pick a fusion pair at a block position."""

    def __init__(self, message: str, position: tuple[int, int] | None = None):
        super().__init__(message)
        self.position = position


class FusionError(EdofError):
    """Fusion stage failure, carrying block-position context where known."""

    def __init__(self, message: str, position: tuple[int, int] | None = None):
        super().__init__(message)
        self.position = position


class TrainingDivergedError(EdofError):
    """The training loss became non-finite."""

    def __init__(self, message: str, epoch: int, batch: int):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch


class MetricUndefinedError(EdofError):
    """A metric has no defined value (e.g. no valid pixels)."""


class ConfigError(EdofError):
    """Invalid or inconsistent pipeline configuration."""
