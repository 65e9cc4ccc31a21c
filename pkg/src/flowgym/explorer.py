"""Smooth exploration noise for encoded chunks.

Perturbations are sums of truncated Gaussian bumps added per channel in the
normalized space, including the horizon channel, then clamped back to the
valid normalized ranges.  Bump smoothness keeps perturbed chunks physically
plausible after decoding, unlike white noise on individual columns.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .checks import require
from .codec import AugmentedChunk, ChunkNormalizer

BUMP_TRUNCATION_SIGMAS = 4.0


@dataclass(frozen=True)
class ExploreParams:
    """Bump-field configuration; ``magnitude`` 0 disables exploration."""

    magnitude: float = 0.1
    bumps_per_channel: int = 2
    width_min_frac: float = 1.0 / 16.0
    width_max_frac: float = 1.0 / 4.0

    def __post_init__(self):
        require(self.magnitude >= 0.0, "magnitude must be >= 0")
        require(self.bumps_per_channel >= 1, "need at least one bump")
        require(0.0 < self.width_min_frac <= self.width_max_frac,
                "bump width fractions must satisfy 0 < min <= max")


def bump_profile(center: float, width: float, amplitude: float,
                 length: int) -> np.ndarray:
    """One Gaussian bump over 1-indexed positions, zero beyond 4 widths."""
    t = np.arange(1, length + 1, dtype=np.float64)
    z = (t - center) / width
    profile = amplitude * np.exp(-0.5 * z * z)
    profile[np.abs(z) > BUMP_TRUNCATION_SIGMAS] = 0.0
    return profile


def sample_field(rng: np.random.Generator, n_channels: int, length: int,
                 params: ExploreParams) -> np.ndarray:
    """Sum-of-bumps noise field, one row per channel.

    Per bump the draw order is center ~ uniform{1..length}, width ~
    U[length * width_min_frac, length * width_max_frac], amplitude ~
    U[-magnitude, magnitude]; channels are filled in row order.
    """
    field = np.zeros((n_channels, length), dtype=np.float64)
    for c in range(n_channels):
        for _ in range(params.bumps_per_channel):
            center = float(rng.integers(1, length + 1))
            width = float(rng.uniform(params.width_min_frac * length,
                                      params.width_max_frac * length))
            amplitude = float(rng.uniform(-params.magnitude, params.magnitude))
            field[c] += bump_profile(center, width, amplitude, length)
    return field


def clamp_augmented(values: np.ndarray, norm: ChunkNormalizer) -> np.ndarray:
    """Clamp action rows to the actuator range (in normalized units) and the
    horizon row to [-1, 1]."""
    bounds = norm.normalized_action_bounds()
    out = values.copy()
    out[0] = np.clip(out[0], bounds[0, 0], bounds[0, 1])
    out[1] = np.clip(out[1], bounds[1, 0], bounds[1, 1])
    out[2] = np.clip(out[2], -1.0, 1.0)
    return out


def perturb(rng: np.random.Generator, aug: AugmentedChunk,
            params: ExploreParams, norm: ChunkNormalizer) -> AugmentedChunk:
    """Add a bump field to an encoded chunk and clamp.

    Zero magnitude is a strict identity: no random draws are consumed and
    the input object is returned unchanged.
    """
    if params.magnitude == 0.0:
        return aug
    field = sample_field(rng, aug.values.shape[0], aug.h_prime, params)
    return AugmentedChunk(clamp_augmented(aug.values + field, norm))
