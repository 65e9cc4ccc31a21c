"""Task rewards over executed chunks.

Every reward is the goal-distance term plus at most one auxiliary penalty,
so rewards are always <= 0 and "cost" below means the absolute value.
Rewards are pure functions of (observation, chunk, rollout); nothing here
touches the simulator.
"""

from __future__ import annotations

import numpy as np

from .checks import require
from .codec import ActionChunk
from .env import ACTION_BOUNDS, AugmentedObservation, ObservationRollout

TIME_PENALTY_RATE = 0.1

REWARD_IDS = (
    "position",
    "position_time",
    "position_velocity",
    "position_wall",
    "position_heading",
    "position_control",
)


def position_term(obs: AugmentedObservation, rollout: ObservationRollout) -> float:
    """Negative Euclidean distance from the final position to the goal."""
    final_p = rollout.observations[-1, 0:2]
    return -float(np.linalg.norm(final_p - obs.goal))


def penalty_term(reward_id: str, obs: AugmentedObservation, chunk: ActionChunk,
                 rollout: ObservationRollout) -> float:
    """The auxiliary penalty for ``reward_id`` (0 for plain position)."""
    if reward_id == "position":
        return 0.0
    if reward_id == "position_time":
        return -TIME_PENALTY_RATE * chunk.horizon * chunk.dt
    if reward_id == "position_velocity":
        return -float(rollout.observations[-1, 4])
    if reward_id == "position_wall":
        return -1.0 if rollout.collided else 0.0
    if reward_id == "position_heading":
        return -0.5 * (1.0 - float(rollout.observations[-1, 3]))
    if reward_id == "position_control":
        peaks = np.abs(chunk.values).max(axis=1) / ACTION_BOUNDS
        return -float(peaks.mean())
    raise ValueError(f"unknown reward id {reward_id!r}; "
                     f"expected one of {REWARD_IDS}")


def evaluate_terms(reward_id: str, obs: AugmentedObservation, chunk: ActionChunk,
                   rollout: ObservationRollout) -> tuple[float, float]:
    """(goal-distance term, auxiliary penalty term)."""
    require(rollout.horizon == chunk.horizon,
            f"rollout covers {rollout.horizon} steps but the chunk has "
            f"{chunk.horizon}")
    return (position_term(obs, rollout),
            penalty_term(reward_id, obs, chunk, rollout))


def evaluate(reward_id: str, obs: AugmentedObservation, chunk: ActionChunk,
             rollout: ObservationRollout) -> float:
    pos, pen = evaluate_terms(reward_id, obs, chunk, rollout)
    return pos + pen
