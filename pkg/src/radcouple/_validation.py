"""Small argument checks shared across modules."""

import math
import numbers

import numpy as np

from .exceptions import DomainError


def check_positive(value, name):
    if not isinstance(value, numbers.Real) or not math.isfinite(value) or value <= 0:
        raise DomainError(f"{name} must be a positive finite real, got {value!r}")
    return float(value)


def check_int(value, name, minimum):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral) or value < minimum:
        raise DomainError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def check_radius(r, r_max, name="r"):
    """Require ``0 < r < r_max``."""
    if not isinstance(r, numbers.Real) or not math.isfinite(r) or not 0 < r < r_max:
        raise DomainError(f"{name}={r!r} outside (0, {r_max})")
    return float(r)


def check_time_grid(T, dt):
    """Validate a uniform grid and return the number of steps."""
    T = check_positive(T, "T")
    dt = check_positive(dt, "dt")
    if dt > T / 10 * (1 + 1e-12):
        raise DomainError(f"dt={dt} must not exceed T/10={T / 10}")
    n = int(round(T / dt))
    if abs(n * dt - T) > 1e-9 * T:
        raise DomainError(f"T={T} is not an integer multiple of dt={dt}")
    return n


def check_square(matrix, name="J"):
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DomainError(f"{name} must be a square matrix, got shape {m.shape}")
    if not np.isfinite(m).all():
        raise DomainError(f"{name} has non-finite entries")
    return m
