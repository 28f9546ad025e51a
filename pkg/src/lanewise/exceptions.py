"""Exception types shared across the package."""


class LanewiseError(Exception):
    """Base class for all package errors."""


class InvalidInputError(LanewiseError, ValueError):
    """An input violates a documented precondition (bad shape, range, ...)."""


class InsufficientPointsError(LanewiseError, ValueError):
    """Too few points to fit a line or calibrate an offset slot."""


class OutOfBandError(LanewiseError, ValueError):
    """A queried image row lies outside the lane model's valid band."""


class DegenerateDataError(LanewiseError, ValueError):
    """Training data cannot support the requested model (e.g. one class)."""


class UnsupportedLabelError(LanewiseError, ValueError):
    """A label vector outside the supported class set."""


class MissingAnnotationError(LanewiseError, ValueError):
    """A predicted frame has no matching ground-truth annotation."""


class ConfigError(LanewiseError, ValueError):
    """Unknown configuration key or out-of-range value."""


class ModelFormatError(LanewiseError, ValueError):
    """A serialized model file does not parse."""
