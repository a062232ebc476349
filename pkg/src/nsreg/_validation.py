"""Input validation helpers shared by the public API."""

import numbers

import numpy as np


def as_finite_array(x, name="x", ndim=None):
    """Return ``x`` as a float ndarray, rejecting NaN/Inf and wrong rank."""
    arr = np.asarray(x, dtype=float)
    if ndim is not None and arr.ndim not in np.atleast_1d(ndim):
        raise ValueError(f"{name} must have ndim in {ndim}, got {arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    return arr


def check_positive(value, name, strict=True):
    if not isinstance(value, numbers.Real) or not np.isfinite(value):
        raise ValueError(f"{name} must be a finite real number, got {value!r}")
    if strict and value <= 0:
        raise ValueError(f"{name} must be > 0, got {value}")
    if not strict and value < 0:
        raise ValueError(f"{name} must be >= 0, got {value}")
    return float(value)


def check_interval(value, name, low, high, low_open=True, high_open=False):
    value = check_positive(value, name, strict=False) if low >= 0 else float(value)
    if (value <= low if low_open else value < low) or (value >= high if high_open else value > high):
        lb = "(" if low_open else "["
        rb = ")" if high_open else "]"
        raise ValueError(f"{name} must lie in {lb}{low}, {high}{rb}, got {value}")
    return value
