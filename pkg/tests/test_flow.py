"""Flow-matching loss and sampler tests."""

import numpy as np
import pytest

from flowgym.checks import ValidationError
from flowgym.codec import ActionChunk, fit_normalizer
from flowgym.explorer import ExploreParams
from flowgym.flow import (ADVANTAGE_EPS, GroupBatch, draw_flow_noise,
                          flow_matching_loss, grpo_loss, group_advantages,
                          ilfm_loss, reward_weights, rwfm_loss,
                          sample_group_batch, sample_path, sample_policy,
                          surrogate_loss)
from flowgym.networks import SurrogateArch, VelocityArch
from flowgym.rng import substream


def tiny_arch():
    return VelocityArch(h_prime=8, channels=3, obs_dim=7, width=2, cond_dim=4,
                        kernel=3)


def tiny_surrogate():
    return SurrogateArch(h_prime=8, channels=3, obs_dim=7, width=3, kernel=3)


def test_sample_path_noise_and_target_are_consistent():
    rng = substream(0, "path")
    aug = np.random.default_rng(1).uniform(-1, 1, size=(3, 8))
    sample = sample_path(rng, aug)
    assert 0.0 <= sample.tau <= 1.0
    # target = data - eps, so eps = data - target, and the noisy point must
    # equal tau*data + (1-tau)*eps for the same eps
    eps = aug - sample.target
    np.testing.assert_allclose(
        sample.noisy, sample.tau * aug + (1 - sample.tau) * eps, atol=1e-12)


def test_sample_path_endpoints():
    aug = np.ones((3, 8)) * 0.5
    at_data = sample_path(substream(1, "path"), aug, tau=1.0)
    np.testing.assert_allclose(at_data.noisy, aug)
    at_noise = sample_path(substream(1, "path"), aug, tau=0.0)
    eps = aug - at_noise.target
    np.testing.assert_allclose(at_noise.noisy, eps)
    with pytest.raises(ValidationError):
        sample_path(substream(1, "path"), aug, tau=1.5)


def test_exact_velocity_field_reaches_data_under_euler():
    """Integrating the true path velocity from noise lands on the data.

    For a single data point the flow field is (data - x) / (1 - tau); the
    final Euler step of the sampler grid hits the data exactly, so this
    pins the from-noise convention, the tau grid, and the step size all at
    once.
    """
    data = np.random.default_rng(2).uniform(-1, 1, size=(3, 8))

    class ExactField:
        channels = 3
        h_prime = 8
        obs_dim = 7

        def velocity(self, params, chunk, obs, tau):
            return (data[None] - chunk) / (1.0 - tau[:, None, None])

    obs = np.zeros((5, 7))
    for steps in (1, 2, 4, 8):
        out = sample_policy(ExactField(), np.zeros(1), obs,
                            substream(3, "sampler"), steps=steps)
        assert out.shape == (5, 3, 8)
        np.testing.assert_allclose(out, np.broadcast_to(data, out.shape),
                                   atol=1e-10)


def test_sample_policy_zero_field_returns_noise():
    arch = tiny_arch()
    params = arch.init_params(substream(4, "init"))  # zero output head
    obs = np.zeros((3, 7), dtype=np.float32)
    out = sample_policy(arch, params, obs, substream(5, "sampler"), steps=4)
    expected = substream(5, "sampler").standard_normal(
        (3, 3, 8)).astype(np.float32)
    np.testing.assert_array_equal(out, expected)


def test_sample_policy_group_layout():
    arch = tiny_arch()
    params = arch.init_params(substream(4, "init"))
    obs = np.arange(14, dtype=np.float32).reshape(2, 7)
    out = sample_policy(arch, params, obs, substream(6, "sampler"),
                        steps=2, n_per_obs=3)
    assert out.shape == (6, 3, 8)


def test_draw_flow_noise_order_and_shapes():
    tau, eps = draw_flow_noise(substream(7, "path"), 4, 3, 8)
    assert tau.shape == (4,) and eps.shape == (4, 3, 8)
    rng = substream(7, "path")
    np.testing.assert_array_equal(tau, rng.uniform(0.0, 1.0, size=4))
    np.testing.assert_array_equal(eps, rng.standard_normal((4, 3, 8)))


def test_reward_weights_oracle_and_clip():
    np.testing.assert_allclose(reward_weights(np.array([-1.0, -2.0]), 3.0),
                               np.exp([-3.0, -6.0]))
    np.testing.assert_array_equal(reward_weights(np.array([-5.0, 0.0]), 0.0),
                                  [1.0, 1.0])
    big = reward_weights(np.array([-1e9, 1e9]), 10.0)
    np.testing.assert_allclose(big, [np.exp(-50.0), np.exp(50.0)])
    assert np.all(np.isfinite(big))


def test_ilfm_equals_rwfm_at_alpha_zero():
    arch = tiny_arch()
    rng = np.random.default_rng(8)
    params = (rng.standard_normal(arch.n_params) * 0.2).astype(np.float64)
    obs = rng.standard_normal((6, 7))
    aug = rng.standard_normal((6, 3, 8))
    rewards = rng.uniform(-2, 0, size=6)

    a = ilfm_loss(arch, params, obs, aug, substream(9, "path"))
    b = rwfm_loss(arch, params, obs, aug, rewards, 0.0, substream(9, "path"))
    assert a.value == b.value
    np.testing.assert_array_equal(a.grad(arch), b.grad(arch))


def test_weighted_loss_scales_per_sample_errors():
    arch = tiny_arch()
    rng = np.random.default_rng(10)
    params = rng.standard_normal(arch.n_params) * 0.2
    obs = rng.standard_normal((4, 7))
    aug = rng.standard_normal((4, 3, 8))
    tau = rng.uniform(size=4)
    eps = rng.standard_normal((4, 3, 8))

    plain = flow_matching_loss(arch, params, obs, aug, tau, eps,
                               needs_grad=False)
    doubled = flow_matching_loss(arch, params, obs, aug, tau, eps,
                                 weights=np.full(4, 2.0), needs_grad=False)
    assert doubled.value == pytest.approx(2 * plain.value, rel=1e-12)

    # a one-hot weight isolates that sample's error
    one_hot = flow_matching_loss(arch, params, obs, aug, tau, eps,
                                 weights=np.array([4.0, 0, 0, 0]),
                                 needs_grad=False)
    solo = flow_matching_loss(arch, params, obs[:1], aug[:1], tau[:1],
                              eps[:1], needs_grad=False)
    assert one_hot.value == pytest.approx(solo.value, rel=1e-12)


def test_flow_matching_loss_zero_at_perfect_prediction():
    # zero-init network predicts 0; choose eps = aug so the target is 0
    arch = tiny_arch()
    params = arch.init_params(substream(11, "init")).astype(np.float64)
    rng = np.random.default_rng(12)
    aug = rng.standard_normal((3, 3, 8))
    graph = flow_matching_loss(arch, params, rng.standard_normal((3, 7)),
                               aug, rng.uniform(size=3), aug.copy(),
                               needs_grad=False)
    assert graph.value == pytest.approx(0.0, abs=1e-30)


def test_group_advantages_oracle():
    adv = group_advantages(np.array([[1.0, 2.0, 3.0]]))
    std = np.std([1.0, 2.0, 3.0])
    np.testing.assert_allclose(adv, [[-1 / (std + ADVANTAGE_EPS) * 1,
                                      0.0,
                                      1 / (std + ADVANTAGE_EPS) * 1]],
                               atol=1e-9)
    # constant group: all zeros, no blow-up
    np.testing.assert_array_equal(group_advantages(np.full((2, 4), -1.3)),
                                  np.zeros((2, 4)))


def test_group_advantages_rowwise():
    rewards = np.array([[0.0, 1.0], [10.0, 30.0]])
    adv = group_advantages(rewards)
    np.testing.assert_allclose(adv.mean(axis=1), [0.0, 0.0], atol=1e-9)
    np.testing.assert_allclose(adv[0], [-1.0, 1.0], rtol=1e-6)
    np.testing.assert_allclose(adv[1], [-1.0, 1.0], rtol=1e-6)


@pytest.fixture
def norm():
    rng = np.random.default_rng(13)
    return fit_normalizer([ActionChunk(rng.uniform(-1, 1, size=(2, h)))
                           for h in (4, 20, 64)])


def test_sample_group_batch_shapes_and_weights(norm):
    arch = tiny_arch()
    sur = tiny_surrogate()
    rng = np.random.default_rng(14)
    params = (rng.standard_normal(arch.n_params) * 0.1).astype(np.float32)
    sur_params = (rng.standard_normal(sur.n_params) * 0.1).astype(np.float32)
    obs = rng.standard_normal((3, 7))
    group = sample_group_batch(arch, params, sur, sur_params, obs,
                               group_size=5, alpha=2.0,
                               explore=ExploreParams(magnitude=0.1),
                               norm=norm, rng=substream(15, "sampler"))
    assert group.members.shape == (3, 5, 3, 8)
    assert group.scores.shape == (3, 5)
    assert group.group_size == 5
    np.testing.assert_allclose(group.advantages,
                               group_advantages(group.scores))
    np.testing.assert_allclose(group.weights,
                               np.exp(np.clip(2.0 * group.advantages, -50, 50)))


def test_sample_group_batch_zero_magnitude_skips_bumps(norm):
    arch = tiny_arch()
    sur = tiny_surrogate()
    rng = np.random.default_rng(16)
    params = (rng.standard_normal(arch.n_params) * 0.1).astype(np.float32)
    sur_params = (rng.standard_normal(sur.n_params) * 0.1).astype(np.float32)
    obs = rng.standard_normal((2, 7))

    group = sample_group_batch(arch, params, sur, sur_params, obs,
                               group_size=4, alpha=2.0,
                               explore=ExploreParams(magnitude=0.0),
                               norm=norm, rng=substream(17, "sampler"))
    raw = sample_policy(arch, params, obs, substream(17, "sampler"),
                        steps=4, n_per_obs=4).astype(np.float64)
    np.testing.assert_array_equal(
        group.members.reshape(8, 3, 8), raw)


def test_grpo_loss_freezes_members(norm):
    arch = tiny_arch()
    sur = tiny_surrogate()
    rng = np.random.default_rng(18)
    params = (rng.standard_normal(arch.n_params) * 0.1)
    sur_params = (rng.standard_normal(sur.n_params) * 0.1)
    obs = rng.standard_normal((2, 7))
    group = sample_group_batch(arch, params, sur, sur_params, obs,
                               group_size=3, alpha=1.0,
                               explore=ExploreParams(magnitude=0.1),
                               norm=norm, rng=substream(19, "sampler"))
    members_before = group.members.copy()
    graph = grpo_loss(arch, params, group, substream(20, "path"))
    grad = graph.grad(arch)
    assert grad.shape == (arch.n_params,)
    assert np.all(np.isfinite(grad))
    np.testing.assert_array_equal(group.members, members_before)

    # the loss is the weighted flow-matching loss over flattened members
    flat_members = group.members.reshape(6, 3, 8)
    obs_rep = np.repeat(group.obs, 3, axis=0)
    tau, eps = draw_flow_noise(substream(20, "path"), 6, 3, 8)
    manual = flow_matching_loss(arch, params, obs_rep, flat_members, tau,
                                eps, weights=group.weights.reshape(6),
                                needs_grad=False)
    assert graph.value == pytest.approx(manual.value, rel=1e-12)


def test_surrogate_loss_oracle():
    sur = tiny_surrogate()
    params = sur.init_params(substream(21, "surrogate_init")).astype(np.float64)
    rng = np.random.default_rng(22)
    aug = rng.standard_normal((5, 3, 8))
    obs = rng.standard_normal((5, 7))
    rewards = rng.uniform(-2, 0, size=5)
    # zero-init head predicts 0, so the loss is exactly mean(r^2)
    graph = surrogate_loss(sur, params, obs, aug, rewards, needs_grad=False)
    assert graph.value == pytest.approx(np.mean(rewards ** 2), rel=1e-12)


def test_surrogate_loss_gradient_flows():
    sur = tiny_surrogate()
    rng = np.random.default_rng(23)
    params = rng.standard_normal(sur.n_params) * 0.2
    graph = surrogate_loss(sur, params, rng.standard_normal((4, 7)),
                           rng.standard_normal((4, 3, 8)),
                           rng.uniform(-1, 0, size=4))
    grad = graph.grad(sur)
    assert np.any(grad != 0)
    assert np.all(np.isfinite(grad))
