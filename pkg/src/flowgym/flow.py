"""Flow-matching losses and samplers over encoded chunks.

The probability path is the optimal-transport line between a standard
normal draw at flow time 0 and the data chunk at flow time 1, so the
regression target is the constant path velocity (data minus noise) and
forward Euler integration from pure noise reaches a data sample.

All losses build a gradient tape over the policy (or surrogate) parameters
only; chunks, noise draws, and loss weights enter as constants.  In
particular the group-weighted loss treats sampled group members as fixed
regression targets, so no gradient flows through the sampler that produced
them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .checks import require
from .codec import ChunkNormalizer
from .explorer import ExploreParams
from .networks import SurrogateArch, VelocityArch

WEIGHT_EXP_CLIP = 50.0
ADVANTAGE_EPS = 1e-8


@dataclass(frozen=True)
class PathSample:
    """One training point on the noise-to-data line."""

    tau: float
    noisy: np.ndarray
    target: np.ndarray


def sample_path(rng: np.random.Generator, aug_values: np.ndarray,
                tau: float | None = None) -> PathSample:
    """Interpolate one encoded chunk toward a fresh noise draw.

    At tau=1 the noisy point is the data; at tau=0 it is the noise; the
    target velocity is data minus noise at every tau.
    """
    aug_values = np.asarray(aug_values, dtype=np.float64)
    if tau is None:
        tau = float(rng.uniform())
    require(0.0 <= tau <= 1.0, f"tau must lie in [0, 1], got {tau}")
    eps = rng.standard_normal(aug_values.shape)
    noisy = tau * aug_values + (1.0 - tau) * eps
    return PathSample(tau=tau, noisy=noisy, target=aug_values - eps)


def draw_flow_noise(rng: np.random.Generator, batch: int, channels: int,
                    h_prime: int) -> tuple[np.ndarray, np.ndarray]:
    """Batched (tau, eps) draws; tau first, then eps, in one call each."""
    tau = rng.uniform(0.0, 1.0, size=batch)
    eps = rng.standard_normal((batch, channels, h_prime))
    return tau, eps


@dataclass
class LossGraph:
    """A built loss tape: scalar loss plus the parameter leaves."""

    loss: ad.Tensor
    views: dict

    @property
    def value(self) -> float:
        return float(self.loss.value)

    def grad(self, arch) -> np.ndarray:
        ad.backward(self.loss)
        return arch.gather_grads(self.views)


def flow_matching_loss(arch: VelocityArch, params: np.ndarray,
                       obs: np.ndarray, aug: np.ndarray, tau: np.ndarray,
                       eps: np.ndarray, weights: np.ndarray | None = None,
                       needs_grad: bool = True) -> LossGraph:
    """Mean (optionally weighted) squared velocity error over a batch.

    ``aug``: (B, 3, H') encoded chunks as regression data; ``weights``:
    per-sample multipliers applied to each sample's mean squared error
    before averaging over the batch.
    """
    params = np.asarray(params)
    dtype = params.dtype
    aug = np.asarray(aug, dtype=dtype)
    batch = aug.shape[0]
    require(aug.shape == (batch, arch.channels, arch.h_prime),
            f"bad chunk batch shape {aug.shape}")
    tau = np.asarray(tau, dtype=dtype).reshape(batch)
    eps = np.asarray(eps, dtype=dtype).reshape(aug.shape)
    noisy = tau[:, None, None] * aug + (1.0 - tau[:, None, None]) * eps
    target = aug - eps

    views = arch.param_views(params, needs_grad=needs_grad)
    pred = arch.apply(views, ad.Tensor(noisy), obs, tau)
    per_sample = ad.mean(ad.square(ad.sub(pred, ad.Tensor(target))), axes=(1, 2))
    if weights is None:
        loss = ad.mean(per_sample)
    else:
        weights = np.asarray(weights, dtype=dtype).reshape(batch)
        loss = ad.mean(ad.mul(per_sample, ad.Tensor(weights)))
    return LossGraph(loss=loss, views=views)


def ilfm_loss(arch: VelocityArch, params: np.ndarray, obs: np.ndarray,
              aug: np.ndarray, rng: np.random.Generator,
              needs_grad: bool = True) -> LossGraph:
    """Plain imitation flow matching: every sample weighted 1."""
    tau, eps = draw_flow_noise(rng, np.asarray(aug).shape[0], arch.channels,
                               arch.h_prime)
    return flow_matching_loss(arch, params, obs, aug, tau, eps,
                              needs_grad=needs_grad)


def reward_weights(rewards: np.ndarray, alpha: float) -> np.ndarray:
    """exp(alpha * reward), exponent clipped to +-50 for stability."""
    rewards = np.asarray(rewards, dtype=np.float64)
    return np.exp(np.clip(alpha * rewards, -WEIGHT_EXP_CLIP, WEIGHT_EXP_CLIP))


def rwfm_loss(arch: VelocityArch, params: np.ndarray, obs: np.ndarray,
              aug: np.ndarray, rewards: np.ndarray, alpha: float,
              rng: np.random.Generator, needs_grad: bool = True) -> LossGraph:
    """Reward-weighted flow matching; alpha=0 reduces exactly to imitation."""
    tau, eps = draw_flow_noise(rng, np.asarray(aug).shape[0], arch.channels,
                               arch.h_prime)
    return flow_matching_loss(arch, params, obs, aug, tau, eps,
                              weights=reward_weights(rewards, alpha),
                              needs_grad=needs_grad)


def sample_policy(arch: VelocityArch, params: np.ndarray, obs: np.ndarray,
                  rng: np.random.Generator, steps: int = 4,
                  n_per_obs: int = 1) -> np.ndarray:
    """Draw encoded chunks by Euler integration of the learned velocity.

    ``obs``: (B, 7) -> (B * n_per_obs, 3, H'), samples for one observation
    contiguous.  Forward-only; no gradients are recorded.
    """
    params = np.asarray(params)
    obs = np.asarray(obs, dtype=params.dtype)
    require(obs.ndim == 2 and obs.shape[1] == arch.obs_dim,
            f"expected (B, {arch.obs_dim}) observations, got {obs.shape}")
    require(steps >= 1, "need at least one integration step")
    n = obs.shape[0] * n_per_obs
    obs_rep = np.repeat(obs, n_per_obs, axis=0)
    chunk = rng.standard_normal((n, arch.channels, arch.h_prime)).astype(params.dtype)
    h = 1.0 / steps
    for k in range(steps):
        tau = np.full(n, k * h)
        chunk = chunk + h * arch.velocity(params, chunk, obs_rep, tau)
    return chunk


def group_advantages(rewards: np.ndarray) -> np.ndarray:
    """Per-group standardized scores: (B, G) -> (B, G).

    Centered by the group mean and divided by the population standard
    deviation plus a small epsilon, so a constant group gets all zeros.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    require(rewards.ndim == 2, f"expected (B, G) rewards, got {rewards.shape}")
    mean = rewards.mean(axis=1, keepdims=True)
    std = rewards.std(axis=1, keepdims=True)
    return (rewards - mean) / (std + ADVANTAGE_EPS)


def _batched_bump_fields(rng: np.random.Generator, n_fields: int,
                         n_channels: int, length: int,
                         params: ExploreParams) -> np.ndarray:
    """Vectorized bump noise for many chunks at once: (N, C, H).

    Matches the per-chunk construction but draws centers, widths, and
    amplitudes as three array draws instead of per-bump scalars.
    """
    nb = params.bumps_per_channel
    shape = (n_fields, n_channels, nb)
    centers = rng.integers(1, length + 1, size=shape).astype(np.float64)
    widths = rng.uniform(params.width_min_frac * length,
                         params.width_max_frac * length, size=shape)
    amps = rng.uniform(-params.magnitude, params.magnitude, size=shape)
    t = np.arange(1, length + 1, dtype=np.float64)
    z = (t[None, None, None, :] - centers[..., None]) / widths[..., None]
    bumps = amps[..., None] * np.exp(-0.5 * z * z)
    bumps[np.abs(z) > 4.0] = 0.0
    return bumps.sum(axis=2)


def _clamp_augmented_batch(values: np.ndarray,
                           norm: ChunkNormalizer) -> np.ndarray:
    bounds = norm.normalized_action_bounds()
    out = values.copy()
    out[:, 0] = np.clip(out[:, 0], bounds[0, 0], bounds[0, 1])
    out[:, 1] = np.clip(out[:, 1], bounds[1, 0], bounds[1, 1])
    out[:, 2] = np.clip(out[:, 2], -1.0, 1.0)
    return out


@dataclass(frozen=True)
class GroupBatch:
    """Sampled groups for one observation batch, scored by the surrogate."""

    obs: np.ndarray         # (B, 7)
    members: np.ndarray     # (B, G, 3, H')
    scores: np.ndarray      # (B, G) surrogate predictions
    advantages: np.ndarray  # (B, G)
    weights: np.ndarray     # (B, G)

    @property
    def group_size(self) -> int:
        return self.members.shape[1]


def sample_group_batch(arch: VelocityArch, params: np.ndarray,
                       surrogate_arch: SurrogateArch,
                       surrogate_params: np.ndarray, obs: np.ndarray,
                       group_size: int, alpha: float, explore: ExploreParams,
                       norm: ChunkNormalizer, rng: np.random.Generator,
                       steps: int = 4) -> GroupBatch:
    """Sample G chunks per observation, perturb, score, and standardize.

    Draw order: policy noise for all members, then (unless magnitude is 0)
    one batched bump-field draw covering all members.
    """
    obs = np.asarray(obs, dtype=np.float64)
    batch = obs.shape[0]
    members = sample_policy(arch, params, obs, rng, steps=steps,
                            n_per_obs=group_size).astype(np.float64)
    if explore.magnitude > 0.0:
        fields = _batched_bump_fields(rng, members.shape[0], arch.channels,
                                      arch.h_prime, explore)
        members = _clamp_augmented_batch(members + fields, norm)
    obs_rep = np.repeat(obs, group_size, axis=0)
    scores = surrogate_arch.predict(
        surrogate_params, members.astype(surrogate_params.dtype),
        obs_rep).astype(np.float64).reshape(batch, group_size)
    advantages = group_advantages(scores)
    weights = np.exp(np.clip(alpha * advantages,
                             -WEIGHT_EXP_CLIP, WEIGHT_EXP_CLIP))
    return GroupBatch(obs=obs, members=members.reshape(
        batch, group_size, arch.channels, arch.h_prime),
        scores=scores, advantages=advantages, weights=weights)


def grpo_loss(arch: VelocityArch, params: np.ndarray, group: GroupBatch,
              rng: np.random.Generator, needs_grad: bool = True) -> LossGraph:
    """Group-weighted flow matching on frozen group members.

    Members act as regression data; only the velocity network parameters
    receive gradients.
    """
    batch, group_size = group.members.shape[:2]
    n = batch * group_size
    obs_rep = np.repeat(group.obs, group_size, axis=0)
    members = group.members.reshape(n, arch.channels, arch.h_prime)
    tau, eps = draw_flow_noise(rng, n, arch.channels, arch.h_prime)
    return flow_matching_loss(arch, params, obs_rep, members, tau, eps,
                              weights=group.weights.reshape(n),
                              needs_grad=needs_grad)


def surrogate_loss(arch: SurrogateArch, params: np.ndarray, obs: np.ndarray,
                   aug: np.ndarray, rewards: np.ndarray,
                   needs_grad: bool = True) -> LossGraph:
    """Mean squared error between predicted and realized rewards."""
    params = np.asarray(params)
    dtype = params.dtype
    aug = np.asarray(aug, dtype=dtype)
    batch = aug.shape[0]
    target = np.asarray(rewards, dtype=dtype).reshape(batch, 1)
    views = arch.param_views(params, needs_grad=needs_grad)
    pred = arch.apply(views, ad.Tensor(aug), obs)
    loss = ad.mean(ad.square(ad.sub(pred, ad.Tensor(target))))
    return LossGraph(loss=loss, views=views)
