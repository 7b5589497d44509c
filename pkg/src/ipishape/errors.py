"""Exception types shared across the package."""


class OutOfBoundsError(ValueError):
    """A shape does not fit inside its target grid."""


class EmptySupportError(ValueError):
    """Support estimation found nothing above threshold."""


class EmptyMaskError(ValueError):
    """An operation that needs a nonempty mask received an empty one."""


class UndefinedMetricError(ValueError):
    """A metric is undefined for the given inputs (e.g. IoU of two empty masks)."""


class CorruptDatasetError(RuntimeError):
    """A dataset file is missing or fails its recorded content digest."""
