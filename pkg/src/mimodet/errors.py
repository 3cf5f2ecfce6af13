"""Exception types shared across the package."""

import numpy as np


class MimoError(Exception):
    """Base class for all package errors."""


class ParameterError(MimoError, ValueError):
    """An argument is outside its allowed range or has the wrong shape."""


class DimensionError(ParameterError):
    """Array dimensions are empty or not conformable."""


class SingularMatrixError(MimoError, np.linalg.LinAlgError):
    """A linear system is numerically singular.

    ``singular`` holds a boolean mask over the batch when the solve was
    batched, so callers can tell which systems failed.
    """

    def __init__(self, message, singular=None):
        super().__init__(message)
        self.singular = singular


class CapacityError(MimoError):
    """A brute-force search space exceeds the configured guard."""


class StateError(MimoError):
    """An operation was called without the state it depends on."""


class FormatError(MimoError):
    """A serialized file is malformed, truncated or of the wrong version."""


class ConfigError(MimoError):
    """A run configuration failed validation."""
