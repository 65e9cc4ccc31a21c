"""Bump-field exploration noise tests."""

import numpy as np
import pytest

from flowgym.checks import ValidationError
from flowgym.codec import ActionChunk, AugmentedChunk, encode, fit_normalizer
from flowgym.explorer import (BUMP_TRUNCATION_SIGMAS, ExploreParams,
                              bump_profile, clamp_augmented, perturb,
                              sample_field)
from flowgym.rng import substream


@pytest.fixture
def norm():
    rng = np.random.default_rng(1)
    return fit_normalizer([ActionChunk(rng.uniform(-1, 1, size=(2, h)))
                           for h in (8, 30, 64)])


def test_bump_profile_gaussian_oracle():
    profile = bump_profile(center=10.0, width=3.0, amplitude=0.5, length=32)
    assert profile.shape == (32,)
    # positions are 1-indexed: entry 9 sits at the center
    assert profile[9] == pytest.approx(0.5)
    assert profile[12] == pytest.approx(0.5 * np.exp(-0.5))  # one width away
    assert profile[6] == pytest.approx(0.5 * np.exp(-0.5))


def test_bump_profile_truncates_at_four_widths():
    profile = bump_profile(center=1.0, width=2.0, amplitude=1.0, length=64)
    # |z| > 4 is zeroed exactly
    cut = int(1 + BUMP_TRUNCATION_SIGMAS * 2.0)
    assert np.all(profile[cut:] == 0.0)
    assert profile[cut - 1] != 0.0


def test_sample_field_matches_documented_draw_order():
    params = ExploreParams(magnitude=0.3, bumps_per_channel=2)
    field = sample_field(substream(4, "explorer"), 3, 16, params)

    rng = substream(4, "explorer")
    expected = np.zeros((3, 16))
    for c in range(3):
        for _ in range(2):
            center = float(rng.integers(1, 17))
            width = float(rng.uniform(16 / 16, 16 / 4))
            amp = float(rng.uniform(-0.3, 0.3))
            expected[c] += bump_profile(center, width, amp, 16)
    np.testing.assert_array_equal(field, expected)


def test_sample_field_amplitude_bounded():
    params = ExploreParams(magnitude=0.2, bumps_per_channel=2)
    field = sample_field(substream(9, "explorer"), 3, 64, params)
    assert np.max(np.abs(field)) <= 2 * 0.2 + 1e-12


def test_zero_magnitude_is_strict_identity(norm):
    aug = encode(ActionChunk(np.zeros((2, 10))), norm)
    params = ExploreParams(magnitude=0.0)
    rng = substream(7, "explorer")
    before = rng.bit_generator.state
    out = perturb(rng, aug, params, norm)
    assert out is aug
    assert rng.bit_generator.state == before


def test_perturb_changes_values_and_respects_clamps(norm):
    aug = encode(ActionChunk(np.zeros((2, 10))), norm)
    params = ExploreParams(magnitude=5.0, bumps_per_channel=3)
    out = perturb(substream(3, "explorer"), aug, params, norm)
    assert not np.array_equal(out.values, aug.values)
    bounds = norm.normalized_action_bounds()
    assert np.all(out.values[0] >= bounds[0, 0] - 1e-12)
    assert np.all(out.values[0] <= bounds[0, 1] + 1e-12)
    assert np.all(out.values[1] >= bounds[1, 0] - 1e-12)
    assert np.all(out.values[1] <= bounds[1, 1] + 1e-12)
    assert np.all(np.abs(out.values[2]) <= 1.0)


def test_perturb_is_deterministic(norm):
    aug = encode(ActionChunk(np.ones((2, 6)) * 0.2), norm)
    params = ExploreParams(magnitude=0.15)
    a = perturb(substream(5, "explorer"), aug, params, norm)
    b = perturb(substream(5, "explorer"), aug, params, norm)
    np.testing.assert_array_equal(a.values, b.values)


def test_clamp_augmented_leaves_inbounds_untouched(norm):
    values = np.zeros((3, 8))
    np.testing.assert_array_equal(clamp_augmented(values, norm), values)


def test_explore_params_validation():
    with pytest.raises(ValidationError):
        ExploreParams(magnitude=-0.1)
    with pytest.raises(ValidationError):
        ExploreParams(bumps_per_channel=0)
    with pytest.raises(ValidationError):
        ExploreParams(width_min_frac=0.5, width_max_frac=0.25)
