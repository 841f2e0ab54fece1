"""Input validation helpers, in the spirit of sklearn's check_array."""

from __future__ import annotations

import numpy as np

from .exceptions import DataError


def check_points(points, name: str = "points") -> np.ndarray:
    """Coerce to an (N, 3) float64 array of finite coordinates."""
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim == 1 and arr.size == 0:
        arr = arr.reshape(0, 3)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise DataError(f"{name} must have shape (N, 3), got {arr.shape}")
    if arr.size and not np.all(np.isfinite(arr)):
        raise DataError(f"{name} contains non-finite coordinates")
    return arr


def check_map(arr, name: str = "map", shape: tuple[int, int] | None = None) -> np.ndarray:
    """Coerce to a 2D float64 grid; NaN is allowed (it marks empty cells)."""
    out = np.asarray(arr, dtype=np.float64)
    if out.ndim != 2:
        raise DataError(f"{name} must be 2D, got ndim={out.ndim}")
    if shape is not None and out.shape != tuple(shape):
        raise DataError(f"{name} must have shape {shape}, got {out.shape}")
    if np.any(np.isinf(out)):
        raise DataError(f"{name} contains infinite values")
    return out


def check_finite(arr, name: str = "array") -> np.ndarray:
    out = np.asarray(arr, dtype=np.float64)
    if not np.all(np.isfinite(out)):
        raise DataError(f"{name} contains non-finite values")
    return out


def check_positive(value: float, name: str) -> float:
    value = float(value)
    if not value > 0:
        raise DataError(f"{name} must be > 0, got {value}")
    return value


def check_range(pair, name: str) -> tuple[float, float]:
    """Validate a (low, high) parameter range; low == high pins the value."""
    lo, hi = (float(v) for v in pair)
    if not (np.isfinite(lo) and np.isfinite(hi)) or hi < lo:
        raise DataError(f"{name} must be a non-empty (low, high) range, got {pair}")
    return lo, hi
