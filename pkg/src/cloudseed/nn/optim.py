"""ADAM optimizer, learning rate schedule, and training configuration."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..errors import DimensionError
from .arch import ModelParams


@dataclass(frozen=True)
class TrainConfig:
    """Training hyperparameters. Defaults follow the staircase-decay recipe."""

    initial_lr: float = 0.01
    decay_factor: float = 0.7
    decay_every: int = 12500
    max_iters: int = 2000
    early_stop_patience: int = 2000
    rng_seed: int = 0
    batch_size: int = 32
    eval_every: int = 50  # validation cadence for early stopping

    def __post_init__(self):
        if not (0.0 < self.decay_factor <= 1.0):
            raise ValueError("decay_factor must be in (0, 1]")
        if self.decay_every < 1:
            raise ValueError("decay_every must be >= 1")


def lr_at(config: TrainConfig, iteration: int) -> float:
    """Staircase schedule: initial_lr * decay_factor ** (iteration // decay_every)."""
    if iteration < 0:
        raise ValueError("iteration must be >= 0")
    return config.initial_lr * config.decay_factor ** (iteration // config.decay_every)


@dataclass(frozen=True)
class AdamState:
    """First and second moment estimates plus the step counter."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def zeros(cls, n_params: int, **kwargs) -> "AdamState":
        return cls(m=np.zeros(n_params), v=np.zeros(n_params), **kwargs)


def adam_step(
    state: AdamState, params: ModelParams, grads: np.ndarray, lr: float
) -> tuple[ModelParams, AdamState]:
    """One bias-corrected ADAM update; returns fresh params and state."""
    g = np.asarray(grads, dtype=np.float64)
    if g.shape != params.values.shape or state.m.shape != params.values.shape:
        raise DimensionError(
            f"gradient shape {g.shape} does not match parameters {params.values.shape}"
        )
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * g
    v = state.beta2 * state.v + (1.0 - state.beta2) * g * g
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new_values = params.values - lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return params.with_values(new_values), replace(state, m=m, v=v, t=t)
