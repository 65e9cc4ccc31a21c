"""Planar unicycle plant: dynamics, task sampling, and open-loop rollouts.

State is a position p in the [-1, 1]^2 box, a unit heading vector h, and a
longitudinal speed v in [0, 1].  Controls are angular velocity (rad/s,
clamped to [-3, 3]) and longitudinal acceleration (m/s^2, clamped to
[-1, 1]).  Positions are clamped to the box after every step and a clamp on
either axis counts as a wall collision, which zeroes the speed.

Integration is semi-implicit Euler: speed first, then heading by an exact
rotation (so ||h|| = 1 is preserved without renormalization), then position
with the updated speed and heading.  All functions are pure; generators are
passed explicitly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .checks import ValidationError, as_finite_array, require

POSITION_BOUND = 1.0
SPEED_MIN = 0.0
SPEED_MAX = 1.0
OMEGA_BOUND = 3.0
ACCEL_BOUND = 1.0
DEFAULT_DT = 0.1

#: per-channel actuation bounds for a (2, H) action matrix, rows [omega, accel]
ACTION_BOUNDS = np.array([OMEGA_BOUND, ACCEL_BOUND])

OBS_DIM = 5
GOAL_DIM = 2
AUG_OBS_DIM = OBS_DIM + GOAL_DIM


@dataclass(frozen=True)
class UnicycleState:
    """Ground-truth simulator state."""

    p: np.ndarray  # position, shape (2,), meters
    h: np.ndarray  # heading unit vector, shape (2,)
    v: float  # longitudinal speed, m/s

    def observation(self) -> np.ndarray:
        """Full observation vector [p_x, p_y, h_x, h_y, v]."""
        return np.array([self.p[0], self.p[1], self.h[0], self.h[1], self.v])


@dataclass(frozen=True)
class Action:
    omega: float  # angular velocity, rad/s
    accel: float  # longitudinal acceleration, m/s^2


@dataclass(frozen=True)
class AugmentedObservation:
    """Observation paired with the commanded goal position."""

    obs: np.ndarray  # shape (5,)
    goal: np.ndarray  # shape (2,)

    def vector(self) -> np.ndarray:
        """Concatenated conditioning vector [obs, goal], shape (7,)."""
        return np.concatenate([self.obs, self.goal])


@dataclass(frozen=True)
class ObservationRollout:
    """H+1 observations produced by executing a chunk, plus a collision flag."""

    observations: np.ndarray  # shape (H+1, 5)
    collided: bool

    @property
    def horizon(self) -> int:
        return self.observations.shape[0] - 1

    def final_state(self) -> UnicycleState:
        return state_from_observation(self.observations[-1])


def state_from_observation(obs) -> UnicycleState:
    obs = np.asarray(obs, dtype=float)
    return UnicycleState(p=obs[:2].copy(), h=obs[2:4].copy(), v=float(obs[4]))


def _validate_state(state: UnicycleState) -> None:
    p = as_finite_array(state.p, "state.p")
    h = as_finite_array(state.h, "state.h")
    require(p.shape == (2,) and h.shape == (2,), "state vectors must have shape (2,)")
    require(math.isfinite(state.v), "state.v must be finite")
    require(abs(float(h @ h) - 1.0) < 1e-6, "heading must be a unit vector")


def step(state: UnicycleState, action: Action, dt: float = DEFAULT_DT):
    """Advance one timestep.

    Returns ``(next_state, collided)`` where ``collided`` is True when the
    position clamp engaged on either axis this step (which also zeroes the
    speed).
    """
    require(math.isfinite(dt) and dt > 0, "dt must be positive and finite")
    _validate_state(state)
    if not (math.isfinite(action.omega) and math.isfinite(action.accel)):
        raise ValidationError("action components must be finite")

    omega = min(max(action.omega, -OMEGA_BOUND), OMEGA_BOUND)
    accel = min(max(action.accel, -ACCEL_BOUND), ACCEL_BOUND)

    v = min(max(state.v + accel * dt, SPEED_MIN), SPEED_MAX)

    ang = omega * dt
    c, s = math.cos(ang), math.sin(ang)
    h = np.array([c * state.h[0] - s * state.h[1], s * state.h[0] + c * state.h[1]])

    p_raw = state.p + dt * v * h
    p = np.clip(p_raw, -POSITION_BOUND, POSITION_BOUND)
    collided = bool(np.any(p_raw != p))
    if collided:
        v = 0.0

    return UnicycleState(p=p, h=h, v=v), collided


def rollout(state: UnicycleState, chunk, dt: float = DEFAULT_DT) -> ObservationRollout:
    """Execute an open-loop action chunk, returning H+1 observations.

    ``chunk`` is a (2, H) matrix with rows [omega, accel] (an ActionChunk's
    ``values`` attribute is accepted directly).
    """
    values = np.asarray(getattr(chunk, "values", chunk), dtype=float)
    require(values.ndim == 2 and values.shape[0] == 2, "chunk must have shape (2, H)")
    horizon = values.shape[1]
    require(horizon >= 1, "chunk horizon must be >= 1")

    observations = np.empty((horizon + 1, OBS_DIM))
    observations[0] = state.observation()
    collided = False
    current = state
    for t in range(horizon):
        current, hit = step(current, Action(values[0, t], values[1, t]), dt)
        collided = collided or hit
        observations[t + 1] = current.observation()
    return ObservationRollout(observations=observations, collided=collided)


def sample_task(rng: np.random.Generator):
    """Draw a fresh (initial state, augmented observation) task pair.

    Positions and goal uniform over the box, speed uniform over [0, 1],
    heading uniform on the unit circle.  Draw order is fixed and part of
    the reproducibility contract.
    """
    p = rng.uniform(-POSITION_BOUND, POSITION_BOUND, size=2)
    theta = rng.uniform(0.0, 2.0 * math.pi)
    v = rng.uniform(SPEED_MIN, SPEED_MAX)
    goal = rng.uniform(-POSITION_BOUND, POSITION_BOUND, size=2)
    state = UnicycleState(p=p, h=np.array([math.cos(theta), math.sin(theta)]), v=v)
    return state, AugmentedObservation(obs=state.observation(), goal=goal)
