"""Hand-written AdamW on flat parameter vectors.

Steps are pure: they return a new parameter vector and a new optimizer
state, so a checkpoint is just (params, m, v, step) and resuming reproduces
the exact update sequence.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .checks import ValidationError, require


@dataclass(frozen=True)
class AdamWParams:
    learning_rate: float = 5e-3
    beta1: float = 0.9
    beta2: float = 0.95
    eps: float = 1e-8
    weight_decay: float = 0.01


@dataclass(frozen=True)
class AdamWState:
    hyper: AdamWParams
    m: np.ndarray
    v: np.ndarray
    step: int = 0


def adamw_init(n_params: int, hyper: AdamWParams | None = None,
               dtype=np.float32) -> AdamWState:
    hyper = hyper or AdamWParams()
    require(n_params > 0, "n_params must be positive")
    return AdamWState(hyper=hyper,
                      m=np.zeros(n_params, dtype=dtype),
                      v=np.zeros(n_params, dtype=dtype),
                      step=0)


def adamw_step(state: AdamWState, params: np.ndarray,
               grads: np.ndarray) -> tuple[np.ndarray, AdamWState]:
    """One decoupled-weight-decay Adam update with bias correction."""
    params = np.asarray(params)
    grads = np.asarray(grads, dtype=params.dtype)
    require(params.shape == grads.shape == state.m.shape,
            f"shape mismatch: params {params.shape}, grads {grads.shape}, "
            f"state {state.m.shape}")
    if not np.all(np.isfinite(grads)):
        raise ValidationError("non-finite gradient passed to adamw_step")
    h = state.hyper
    step = state.step + 1
    m = h.beta1 * state.m + (1.0 - h.beta1) * grads
    v = h.beta2 * state.v + (1.0 - h.beta2) * grads * grads
    m_hat = m / (1.0 - h.beta1 ** step)
    v_hat = v / (1.0 - h.beta2 ** step)
    update = m_hat / (np.sqrt(v_hat) + h.eps) + h.weight_decay * params
    new_params = params - h.learning_rate * update
    return new_params, replace(state, m=m, v=v, step=step)
