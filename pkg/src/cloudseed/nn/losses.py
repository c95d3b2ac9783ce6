"""Losses: stabilized cross-entropy and the smooth L1 (Huber) loss."""

from __future__ import annotations

import numpy as np

from ..errors import DimensionError


def log_softmax(logits: np.ndarray) -> np.ndarray:
    """Log-softmax along the last axis with log-sum-exp stabilization."""
    z = np.asarray(logits, dtype=np.float64)
    m = z.max(axis=-1, keepdims=True)
    return z - m - np.log(np.exp(z - m).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def _flatten_logits(logits, labels):
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(labels)
    if z.ndim < 1:
        raise DimensionError("logits need a class axis")
    flat_z = z.reshape(-1, z.shape[-1])
    flat_y = y.reshape(-1).astype(np.int64)
    if flat_y.shape[0] != flat_z.shape[0]:
        raise DimensionError(
            f"labels shape {y.shape} does not match logits shape {z.shape}"
        )
    if flat_y.min(initial=0) < 0 or flat_y.max(initial=0) >= flat_z.shape[-1]:
        raise ValueError("label outside class range")
    return flat_z, flat_y


def cross_entropy_per_point(logits, labels) -> float:
    """Mean negative log-likelihood of integer labels under the logits.

    Accepts (n, C) logits with (n,) labels, batched (B, n, C) with (B, n),
    or a single (C,) vector with a scalar label.
    """
    z, y = _flatten_logits(np.atleast_2d(logits), labels)
    logp = log_softmax(z)
    return float(-logp[np.arange(y.shape[0]), y].mean())


def cross_entropy_grad(logits, labels) -> np.ndarray:
    """Gradient of cross_entropy_per_point with respect to the logits."""
    shape = np.asarray(logits, dtype=np.float64).shape
    z, y = _flatten_logits(np.atleast_2d(logits), labels)
    grad = softmax(z)
    grad[np.arange(y.shape[0]), y] -= 1.0
    grad /= y.shape[0]
    return grad.reshape(shape)


def smooth_l1(pred, target, delta: float = 1.0) -> float:
    """Mean Huber loss: quadratic within delta of the target, linear beyond."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if p.shape != t.shape:
        raise DimensionError(f"pred shape {p.shape} != target shape {t.shape}")
    d = p - t
    a = np.abs(d)
    per_component = np.where(a < delta, 0.5 * d * d / delta, a - 0.5 * delta)
    return float(per_component.mean())


def smooth_l1_grad(pred, target, delta: float = 1.0) -> np.ndarray:
    """Gradient of smooth_l1 with respect to pred."""
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if p.shape != t.shape:
        raise DimensionError(f"pred shape {p.shape} != target shape {t.shape}")
    d = p - t
    grad = np.where(np.abs(d) < delta, d / delta, np.sign(d))
    return grad / p.size
