"""Small input checks shared across modules."""
from __future__ import annotations

import numpy as np


class DimensionError(ValueError):
    """An array does not have the shape the model expects."""


class CapacityError(RuntimeError):
    """An operation would exceed a hard size limit."""


def as_binary(x, length: int | None = None, name: str = "v") -> np.ndarray:
    """Validate a binary vector or matrix (rows are samples) as float64."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim not in (1, 2):
        raise DimensionError(f"{name} must be 1-D or 2-D, got shape {arr.shape}")
    if length is not None and arr.shape[-1] != length:
        raise DimensionError(
            f"{name} has length {arr.shape[-1]}, expected {length}")
    if not np.all((arr == 0.0) | (arr == 1.0)):
        raise ValueError(f"{name} must contain only 0 and 1")
    return arr


def as_matrix(x, name: str = "X") -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_probabilities(p, name: str = "probs") -> np.ndarray:
    arr = np.asarray(p, dtype=np.float64)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ValueError(f"{name} must lie in [0, 1]")
    return arr
