"""Shared training loop: schedule, ADAM states, early stopping, history."""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from ..errors import NumericOverflowError
from .arch import ModelParams
from .optim import AdamState, TrainConfig, adam_step, lr_at


def iteration_seed(base_seed: int, iteration: int) -> int:
    """Well-mixed deterministic per-iteration seed (dropout, sampling)."""
    return int(np.random.SeedSequence((base_seed, iteration)).generate_state(1)[0])


def run_training(
    params_list: Sequence[ModelParams],
    batch_fn: Callable[[Sequence[ModelParams], int], tuple[float, list[np.ndarray]]],
    val_fn: Optional[Callable[[Sequence[ModelParams]], float]],
    config: TrainConfig,
) -> tuple[list[ModelParams], dict]:
    """Drive ADAM over one or more networks sharing a summed loss.

    batch_fn(params_list, iteration) returns the batch loss and one
    gradient per network. val_fn, when given, scores the validation set;
    the best-validation parameters are kept and returned (early stopping
    once no improvement is seen for early_stop_patience iterations).
    """
    params = list(params_list)
    states = [AdamState.zeros(p.values.shape[0]) for p in params]
    history: dict = {"loss": [], "lr": [], "val_iters": [], "val_loss": []}
    best_val = np.inf
    best_iter = -1
    best_params = [p.with_values(p.values.copy()) for p in params]

    for iteration in range(config.max_iters):
        lr = lr_at(config, iteration)
        loss, grads = batch_fn(params, iteration)
        if not np.isfinite(loss):
            raise NumericOverflowError(
                f"training diverged: non-finite loss {loss} at iteration {iteration}"
            )
        for i, grad in enumerate(grads):
            params[i], states[i] = adam_step(states[i], params[i], grad, lr)
        history["loss"].append(float(loss))
        history["lr"].append(float(lr))

        if val_fn is not None and (
            (iteration + 1) % config.eval_every == 0 or iteration == config.max_iters - 1
        ):
            val = float(val_fn(params))
            history["val_iters"].append(iteration)
            history["val_loss"].append(val)
            if val < best_val:
                best_val = val
                best_iter = iteration
                best_params = [p.with_values(p.values.copy()) for p in params]
            elif iteration - best_iter >= config.early_stop_patience:
                break

    if val_fn is None:
        best_params = params
        best_iter = config.max_iters - 1
    history["best_iter"] = int(best_iter)
    history["best_val_loss"] = float(best_val) if np.isfinite(best_val) else None
    return best_params, history
