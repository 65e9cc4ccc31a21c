"""Small input-validation helpers shared across the package."""

from __future__ import annotations

import numpy as np


class ValidationError(ValueError):
    """Raised when an input violates a documented precondition."""


def as_finite_array(x, name: str, dtype=np.float64) -> np.ndarray:
    arr = np.asarray(x, dtype=dtype)
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} must be finite, got {arr!r}")
    return arr


def require(cond: bool, message: str) -> None:
    if not cond:
        raise ValidationError(message)
