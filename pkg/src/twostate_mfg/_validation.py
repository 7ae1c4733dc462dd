"""Input validation helpers shared by the solvers and estimators."""

import math
import numbers

import numpy as np

#: Slack allowed on structural bounds such as ``|m| <= 1``.
BOUND_TOL = 1e-12


def check_bounded(value, lo, hi, name, tol=BOUND_TOL):
    """Return ``value`` as a float inside ``[lo, hi]``.

    Values outside the interval by at most ``tol`` are clamped; anything
    further out raises ``ValueError``.
    """
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise TypeError(f"{name} must be a real number, got {type(value).__name__}")
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value}")
    if value < lo - tol or value > hi + tol:
        raise ValueError(f"{name} must lie in [{lo}, {hi}], got {value!r}")
    return min(max(value, lo), hi)


def check_bounded_array(values, lo, hi, name, tol=BOUND_TOL):
    arr = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    if np.any(arr < lo - tol) or np.any(arr > hi + tol):
        raise ValueError(f"{name} must lie in [{lo}, {hi}]")
    return np.clip(arr, lo, hi)


def check_mean(m, name="m"):
    return check_bounded(m, -1.0, 1.0, name)


def check_fraction(mu, name="mu"):
    return check_bounded(mu, 0.0, 1.0, name)


def check_positive(value, name):
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise TypeError(f"{name} must be a real number, got {type(value).__name__}")
    value = float(value)
    if not (math.isfinite(value) and value > 0.0):
        raise ValueError(f"{name} must be a positive finite number, got {value!r}")
    return value


def check_nonnegative(value, name):
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise TypeError(f"{name} must be a real number, got {type(value).__name__}")
    value = float(value)
    if not (math.isfinite(value) and value >= 0.0):
        raise ValueError(f"{name} must be a nonnegative finite number, got {value!r}")
    return value


def check_int(value, name, minimum=None):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise TypeError(f"{name} must be an integer, got {type(value).__name__}")
    value = int(value)
    if minimum is not None and value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return value


def check_state(x, name="x"):
    if x not in (-1, 1) or isinstance(x, bool):
        raise ValueError(f"{name} must be -1 or +1, got {x!r}")
    return int(x)
