"""Scripted proportional controller used to generate demonstrations.

Each demonstration draws a fresh task, fresh controller gains, and a fresh
chunk length, then runs the controller closed loop.  The recorded action
sequence replayed open loop through the simulator reproduces the recorded
states exactly, so demonstrations double as ground-truth rollouts.
"""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from .checks import require
from .codec import H_MAX, ActionChunk
from .env import (ACCEL_BOUND, DEFAULT_DT, OMEGA_BOUND, Action,
                  AugmentedObservation, ObservationRollout, UnicycleState,
                  sample_task, step)

GOAL_SPEED_RANGE = (0.2, 1.0)
GAIN_RANGE = (0.3, 3.0)


@dataclass(frozen=True)
class DemoParams:
    """Controller draw for one demonstration."""

    goal_speed: float
    k_heading: float
    k_speed: float


def sample_params(rng: np.random.Generator) -> DemoParams:
    """Fresh cruise speed and gains; redrawn for every trajectory."""
    return DemoParams(goal_speed=float(rng.uniform(*GOAL_SPEED_RANGE)),
                      k_heading=float(rng.uniform(*GAIN_RANGE)),
                      k_speed=float(rng.uniform(*GAIN_RANGE)))


def wrap_angle(angle: float) -> float:
    """Wrap to (-pi, pi]."""
    wrapped = (angle + math.pi) % (2.0 * math.pi) - math.pi
    if wrapped == -math.pi:
        return math.pi
    return wrapped


def demo_action(params: DemoParams, state: UnicycleState,
                goal: np.ndarray) -> Action:
    """P-control on heading error and speed error, clamped to the actuators."""
    goal = np.asarray(goal, dtype=np.float64)
    bearing = math.atan2(goal[1] - state.p[1], goal[0] - state.p[0])
    heading = math.atan2(state.h[1], state.h[0])
    err = wrap_angle(bearing - heading)
    omega = min(max(params.k_heading * err, -OMEGA_BOUND), OMEGA_BOUND)
    accel = min(max(params.k_speed * (params.goal_speed - state.v),
                    -ACCEL_BOUND), ACCEL_BOUND)
    return Action(omega=omega, accel=accel)


def run_controller(params: DemoParams, state: UnicycleState, goal: np.ndarray,
                   horizon: int, dt: float = DEFAULT_DT
                   ) -> tuple[ActionChunk, ObservationRollout]:
    """Run the controller closed loop for ``horizon`` steps."""
    require(horizon >= 1, "horizon must be >= 1")
    actions = np.empty((2, horizon), dtype=np.float64)
    observations = np.empty((horizon + 1, 5), dtype=np.float64)
    observations[0] = state.observation()
    collided = False
    current = state
    for t in range(horizon):
        action = demo_action(params, current, goal)
        actions[0, t] = action.omega
        actions[1, t] = action.accel
        current, hit = step(current, action, dt)
        collided = collided or hit
        observations[t + 1] = current.observation()
    return (ActionChunk(actions, dt=dt),
            ObservationRollout(observations, collided=collided))


def generate_demo(rng: np.random.Generator, dt: float = DEFAULT_DT,
                  h_max: int = H_MAX
                  ) -> tuple[AugmentedObservation, ActionChunk, ObservationRollout]:
    """One full demonstration: task, gains, length, closed-loop run.

    Draw order (fixed for reproducibility): task, controller params, horizon.
    """
    state, aug_obs = sample_task(rng)
    params = sample_params(rng)
    horizon = int(rng.integers(1, h_max + 1))
    chunk, rollout = run_controller(params, state, aug_obs.goal, horizon, dt)
    return aug_obs, chunk, rollout
