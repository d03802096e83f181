"""Input validation helpers in the spirit of ``sklearn.utils.validation``."""

from __future__ import annotations

import math
import numbers

import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import UsageError


def check_points(X, *, name="X", dim=None, min_rows=1):
    """Return ``X`` as a finite float64 array of shape (n, d).

    1-D input is read as ``n`` one-dimensional points.
    """
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    try:
        arr = check_array(
            arr, dtype=np.float64, ensure_2d=True, ensure_min_samples=min_rows,
            ensure_all_finite=True, copy=False,
        )
    except ValueError as exc:
        raise UsageError(f"{name}: {exc}") from None
    if dim is not None and arr.shape[1] != dim:
        raise UsageError(f"{name} has dimension {arr.shape[1]}, expected {dim}")
    return arr


def check_vector(x, dim=None, *, name="x"):
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise UsageError(f"{name} must be a vector, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise UsageError(f"{name} has length {arr.shape[0]}, expected {dim}")
    return arr


def check_scalar(value, name, *, lower=None, upper=None, strict_lower=False,
                 integer=False):
    """Check a real (or integer) scalar against optional bounds and return it."""
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise UsageError(f"{name} must be a number, got {value!r}")
    if integer:
        if not float(value).is_integer():
            raise UsageError(f"{name} must be an integer, got {value!r}")
        value = int(value)
    elif not math.isfinite(value):
        raise UsageError(f"{name} must be finite, got {value!r}")
    if lower is not None:
        if strict_lower and not value > lower:
            raise UsageError(f"{name} must be > {lower}, got {value!r}")
        if not strict_lower and not value >= lower:
            raise UsageError(f"{name} must be >= {lower}, got {value!r}")
    if upper is not None and not value <= upper:
        raise UsageError(f"{name} must be <= {upper}, got {value!r}")
    return value


def check_order(p, minimum=1.0):
    return float(check_scalar(p, "p", lower=minimum))
