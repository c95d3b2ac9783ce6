"""Exception types shared across the toolkit."""


class CloudseedError(Exception):
    """Base class for all toolkit errors."""


class MalformedFileError(CloudseedError):
    """Raised when a binary or text payload violates its declared format."""


class CalibrationError(CloudseedError):
    """Raised when a calibration file is missing keys or has wrong arity."""


class FrameMismatchError(CloudseedError):
    """Raised when an operation receives a cloud in the wrong sensor frame."""


class EmptyPatchError(CloudseedError):
    """Raised when a crop volume contains no points."""


class SceneInfeasibleError(CloudseedError):
    """Raised when object placement cannot satisfy the scene spec."""


class DimensionError(CloudseedError):
    """Raised on shape or length mismatches in numeric operations."""


class InstanceTooSparseError(CloudseedError):
    """Raised when a ground truth box contains no scene points."""


class LabelAmbiguityError(CloudseedError):
    """Raised when a click falls inside no ground truth box."""


class EmptyInstanceError(CloudseedError):
    """Raised when segmentation has no candidate points to classify."""


class BelowThresholdError(CloudseedError):
    """Raised when no point clears the foreground threshold.

    Carries the maximum foreground confidence observed so callers can
    report how close the instance came to detection.
    """

    def __init__(self, message: str, max_confidence: float = 0.0):
        super().__init__(message)
        self.max_confidence = max_confidence


class NumericOverflowError(CloudseedError):
    """Raised when a forward or backward pass produces non-finite values."""


class InsufficientDataError(CloudseedError):
    """Raised when a dataset is missing a required category."""


class StateError(CloudseedError):
    """Raised on an invalid annotator session state transition."""


class PoolExhaustedError(CloudseedError):
    """Raised when a scene pool cannot fill a batch."""


class IncompleteBatchError(CloudseedError):
    """Raised when a batch is processed before all scenes are submitted."""


class ClickDatabaseError(CloudseedError):
    """Raised when the click database contains a corrupt record."""
