"""Encoding between native action chunks and fixed-length training arrays.

A native chunk is a (2, H) array of [omega; accel] columns with H anywhere
in [1, h_max].  Training operates on a fixed-size (3, h_prime) array: the
two action channels resampled to h_prime columns by linear interpolation
and normalized per channel, plus a constant third row carrying the native
horizon mapped onto [-1, 1].  Decoding reads the horizon row back, rounds
to the nearest integer step count, and resamples the action rows to that
length.
"""

from __future__ import annotations

from dataclasses import dataclass
import warnings

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .checks import ValidationError, as_finite_array, require
from .env import ACTION_BOUNDS, DEFAULT_DT

H_MAX = 64
H_PRIME = 64
SCALE_FLOOR = 1e-6


@dataclass(frozen=True)
class ActionChunk:
    """A native action sequence: values (2, H), executed at ``dt`` per column."""

    values: np.ndarray
    dt: float = DEFAULT_DT

    def __post_init__(self):
        values = as_finite_array(self.values, "chunk values")
        require(values.ndim == 2 and values.shape[0] == 2,
                f"chunk values must be (2, H), got {values.shape}")
        require(values.shape[1] >= 1, "chunk must have at least one step")
        object.__setattr__(self, "values", values)

    @property
    def horizon(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class AugmentedChunk:
    """Fixed-length training representation: values (3, h_prime).

    Rows 0-1 are normalized action channels, row 2 is the horizon channel
    (constant at encode time, averaged at decode time).
    """

    values: np.ndarray

    def __post_init__(self):
        values = as_finite_array(self.values, "augmented chunk values")
        require(values.ndim == 2 and values.shape[0] == 3,
                f"augmented chunk must be (3, h_prime), got {values.shape}")
        object.__setattr__(self, "values", values)

    @property
    def h_prime(self) -> int:
        return self.values.shape[1]


def interpolate_columns(values: np.ndarray, target_len: int) -> np.ndarray:
    """Resample each row of (C, H) to ``target_len`` columns.

    Columns are treated as samples of a piecewise-linear signal on [0, 1];
    a single-column input broadcasts to a constant signal.  Resampling to
    the same length returns the values unchanged.
    """
    values = np.asarray(values)
    require(values.ndim == 2, f"expected 2-D array, got shape {values.shape}")
    require(target_len >= 1, "target length must be >= 1")
    n = values.shape[1]
    if n == target_len:
        return values.copy()
    if n == 1:
        return np.repeat(values, target_len, axis=1)
    src = np.linspace(0.0, 1.0, n)
    dst = np.linspace(0.0, 1.0, target_len)
    out = np.empty((values.shape[0], target_len), dtype=np.float64)
    for i in range(values.shape[0]):
        out[i] = np.interp(dst, src, values[i])
    return out


def horizon_to_unit(horizon, h_max: int = H_MAX):
    """Map an integer step count in [1, h_max] onto [-1, 1]."""
    return 2.0 * (np.asarray(horizon, dtype=np.float64) - 1.0) / (h_max - 1) - 1.0


def unit_to_horizon(unit, h_max: int = H_MAX):
    """Inverse of horizon_to_unit (continuous; rounding happens at decode)."""
    return (np.asarray(unit, dtype=np.float64) + 1.0) * (h_max - 1) / 2.0 + 1.0


def _round_half_away(x: float) -> int:
    return int(np.sign(x) * np.floor(np.abs(x) + 0.5))


class ChunkNormalizer(TransformerMixin, BaseEstimator):
    """Per-channel affine normalizer for action chunks.

    ``fit`` pools every column of the training chunks and computes a
    per-channel mean and standard deviation; channels with near-zero spread
    are clamped to a floor scale (with a warning) so transform stays
    invertible.  The horizon mapping [1, h_max] <-> [-1, 1] rides along so
    a single fitted object fully defines the augmented representation.
    """

    def __init__(self, h_max: int = H_MAX, scale_floor: float = SCALE_FLOOR):
        self.h_max = h_max
        self.scale_floor = scale_floor

    def fit(self, chunks, y=None):
        require(int(self.h_max) >= 2, "h_max must be >= 2")
        columns = [as_finite_array(getattr(c, "values", c), "chunk values")
                   for c in chunks]
        require(len(columns) > 0, "cannot fit a normalizer on zero chunks")
        pooled = np.concatenate(columns, axis=1)
        require(pooled.shape[0] == 2, "chunks must have 2 action channels")
        self.offset_ = pooled.mean(axis=1)
        scale = pooled.std(axis=1)
        floored = scale < self.scale_floor
        if np.any(floored):
            warnings.warn(
                f"normalizer scale below {self.scale_floor} on channels "
                f"{np.nonzero(floored)[0].tolist()}; clamping", stacklevel=2)
            scale = np.maximum(scale, self.scale_floor)
        self.scale_ = scale
        return self

    def transform(self, values: np.ndarray) -> np.ndarray:
        """(2, H) raw action values -> normalized values."""
        values = as_finite_array(values, "chunk values")
        require(values.ndim == 2 and values.shape[0] == 2,
                f"expected (2, H) values, got {values.shape}")
        return (values - self.offset_[:, None]) / self.scale_[:, None]

    def inverse_transform(self, values: np.ndarray) -> np.ndarray:
        values = as_finite_array(values, "normalized values")
        require(values.ndim == 2 and values.shape[0] == 2,
                f"expected (2, H) values, got {values.shape}")
        return values * self.scale_[:, None] + self.offset_[:, None]

    def normalized_action_bounds(self) -> np.ndarray:
        """Clamp limits for the action rows in normalized space: (2, 2)."""
        lo = (-ACTION_BOUNDS - self.offset_) / self.scale_
        hi = (ACTION_BOUNDS - self.offset_) / self.scale_
        return np.stack([lo, hi], axis=1)

    def to_dict(self) -> dict:
        return {"offset": self.offset_.tolist(),
                "scale": self.scale_.tolist(),
                "h_max": int(self.h_max)}

    @classmethod
    def from_dict(cls, payload: dict) -> "ChunkNormalizer":
        norm = cls(h_max=int(payload["h_max"]))
        norm.offset_ = np.asarray(payload["offset"], dtype=np.float64)
        norm.scale_ = np.asarray(payload["scale"], dtype=np.float64)
        require(norm.offset_.shape == (2,) and norm.scale_.shape == (2,),
                "normalizer payload must carry 2 channels")
        require(bool(np.all(norm.scale_ > 0)), "normalizer scale must be positive")
        return norm


def fit_normalizer(chunks, h_max: int = H_MAX) -> ChunkNormalizer:
    return ChunkNormalizer(h_max=h_max).fit(chunks)


def encode(chunk: ActionChunk, norm: ChunkNormalizer,
           h_prime: int = H_PRIME) -> AugmentedChunk:
    """Native chunk -> fixed-length normalized array with horizon row."""
    require(1 <= chunk.horizon <= norm.h_max,
            f"chunk horizon {chunk.horizon} outside [1, {norm.h_max}]")
    resampled = interpolate_columns(chunk.values, h_prime)
    actions = norm.transform(resampled)
    horizon_row = np.full((1, h_prime), horizon_to_unit(chunk.horizon, norm.h_max))
    return AugmentedChunk(np.concatenate([actions, horizon_row], axis=0))


def decode(aug: AugmentedChunk, norm: ChunkNormalizer,
           dt: float = DEFAULT_DT) -> ActionChunk:
    """Fixed-length array -> native chunk.

    The horizon row is averaged, mapped back to steps, rounded half away
    from zero, and clamped to [1, h_max]; the action rows are denormalized,
    resampled to that many columns, and clamped to the actuator bounds.
    """
    values = as_finite_array(aug.values, "augmented chunk values")
    raw_h = float(unit_to_horizon(values[2].mean(), norm.h_max))
    horizon = min(max(_round_half_away(raw_h), 1), int(norm.h_max))
    actions = norm.inverse_transform(values[:2])
    actions = interpolate_columns(actions, horizon)
    actions = np.clip(actions, -ACTION_BOUNDS[:, None], ACTION_BOUNDS[:, None])
    return ActionChunk(actions, dt=dt)
