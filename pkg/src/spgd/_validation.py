"""Exceptions and input-checking helpers shared across the package."""

from __future__ import annotations

import numpy as np


class SPGDError(Exception):
    """Base class for errors raised by this package."""


class InputError(SPGDError, ValueError):
    """An argument has the wrong shape, range or type."""


class ConfigurationError(SPGDError, ValueError):
    """A run configuration or catalogue lookup is invalid."""

    def __init__(self, message, pointer=None):
        self.pointer = pointer
        if pointer is not None:
            message = f"{pointer}: {message}"
        super().__init__(message)


class DomainError(SPGDError, ValueError):
    """A time or index lies outside the range covered by the data."""


class NumericalBlowupError(SPGDError, FloatingPointError):
    """A non-finite value appeared during an iteration."""

    def __init__(self, message, step):
        self.step = step
        super().__init__(f"{message} (step {step})")


class IntegratorError(NumericalBlowupError):
    """The reference flow integrator produced a non-finite state."""


class SummableScheduleError(SPGDError, RuntimeError):
    """A window end could not be reached within the iteration cap."""


class DataCompletenessError(SPGDError, RuntimeError):
    """A diagnostic needs records that a thinned trajectory dropped."""


class UndefinedRatioError(SPGDError, ZeroDivisionError):
    """A weighted drift average has an empty denominator."""


class ConsistencyError(SPGDError, AssertionError):
    """Two independent evaluations of the same quantity disagree."""


class ComparisonError(SPGDError, ValueError):
    """Two experiments cannot be compared."""


class ProxWarning(UserWarning):
    """The numerical prox search did not improve on the plain projection."""


def check_point(x, dim=None, name="x"):
    """Return ``x`` as a fresh 1-d float64 array, checking its length."""
    arr = np.array(x, dtype=np.float64, copy=True)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise InputError(f"{name} must be a vector, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise InputError(f"{name} has dimension {arr.shape[0]}, expected {dim}")
    return arr


def check_positive(value, name, allow_zero=False):
    value = float(value)
    if not np.isfinite(value) or value < 0 or (value == 0 and not allow_zero):
        bound = ">= 0" if allow_zero else "> 0"
        raise InputError(f"{name} must be finite and {bound}, got {value}")
    return value
