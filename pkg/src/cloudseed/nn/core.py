"""Forward and reverse-mode passes for the two point-set architectures.

This is a fixed-topology backprop, not a general autodiff: the tape
records exactly the intermediates the two architectures need. All public
entry points are deterministic given (params, input, train_mode, seed);
dropout only fires in train mode.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import DimensionError, NumericOverflowError
from .arch import PER_POINT_BINARY, VECTOR, ModelParams
from .losses import (
    cross_entropy_grad,
    cross_entropy_per_point,
    smooth_l1,
    smooth_l1_grad,
)


@dataclass
class Tape:
    """Intermediates of one batched forward pass, consumed by backprop."""

    params: ModelParams
    x: np.ndarray  # (B, n, 3)
    pp_inputs: list  # input to each per-point affine, (B, n, w)
    pp_masks: list  # ReLU masks per per-point layer
    pooled: np.ndarray  # (B, P)
    pool_argmax: np.ndarray  # (B, P) winning point index per feature
    global_inputs: list  # input to each global affine
    global_masks: list
    dropout_mask: Optional[np.ndarray]  # scaled inverted-dropout mask or None
    head_input: np.ndarray
    output: np.ndarray


def _check_points(points: np.ndarray) -> np.ndarray:
    pts = np.asarray(points)
    if pts.ndim == 2:
        pts = pts[None, :, :]
    if pts.ndim != 3 or pts.shape[2] != 3:
        raise DimensionError(f"expected (n, 3) or (B, n, 3) points, got {np.asarray(points).shape}")
    if pts.shape[1] < 1:
        raise DimensionError("need at least one point")
    return pts


def _affine(x2d, w, b):
    return x2d @ w + b


def forward_batch(
    params: ModelParams,
    points: np.ndarray,
    train_mode: bool = False,
    rng_seed: int = 0,
) -> tuple[np.ndarray, Tape]:
    """Run a batch through either architecture, recording the tape.

    points: (B, n, 3). Output is (B, n, 2) per-point logits for the
    binary head or (B, output_dim) for the vector head.
    """
    arch = params.arch
    x = _check_points(points)
    b, n, _ = x.shape

    pp_inputs, pp_masks = [], []
    h = x
    for i in range(len(arch.per_point_widths)):
        pp_inputs.append(h)
        z = _affine(
            h.reshape(b * n, -1), params.tensor(f"pp{i}.w"), params.tensor(f"pp{i}.b")
        ).reshape(b, n, -1)
        mask = z > 0
        pp_masks.append(mask)
        h = z * mask

    pool_argmax = np.argmax(h, axis=1)  # (B, P), first max wins
    pooled = np.take_along_axis(h, pool_argmax[:, None, :], axis=1)[:, 0, :]

    if arch.head == PER_POINT_BINARY:
        g = np.concatenate([h, np.repeat(pooled[:, None, :], n, axis=1)], axis=2)
        flat_rows = b * n
    else:
        g = pooled
        flat_rows = b

    global_inputs, global_masks = [], []
    for i in range(len(arch.global_widths)):
        global_inputs.append(g)
        z = _affine(
            g.reshape(flat_rows, -1), params.tensor(f"global{i}.w"), params.tensor(f"global{i}.b")
        ).reshape(g.shape[:-1] + (-1,))
        mask = z > 0
        global_masks.append(mask)
        g = z * mask

    dropout_mask = None
    if train_mode and arch.dropout_keep < 1.0:
        rng = np.random.default_rng(rng_seed)
        keep = arch.dropout_keep
        dropout_mask = (rng.random(g.shape) < keep).astype(g.dtype) / keep
        g = g * dropout_mask

    head_input = g
    out = _affine(
        g.reshape(flat_rows, -1), params.tensor("head.w"), params.tensor("head.b")
    ).reshape(g.shape[:-1] + (params.arch.output_dim,))

    if not np.all(np.isfinite(out)):
        raise NumericOverflowError("forward pass produced non-finite outputs")

    tape = Tape(
        params=params,
        x=x,
        pp_inputs=pp_inputs,
        pp_masks=pp_masks,
        pooled=pooled,
        pool_argmax=pool_argmax,
        global_inputs=global_inputs,
        global_masks=global_masks,
        dropout_mask=dropout_mask,
        head_input=head_input,
        output=out,
    )
    return out, tape


def backprop(tape: Tape, dout: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pull dout back through the tape.

    Returns (flat parameter gradient, input gradient of shape (B, n, 3)).
    """
    params = tape.params
    arch = params.arch
    b, n, _ = tape.x.shape
    grads = np.zeros_like(params.values)
    gparams = ModelParams(values=grads, arch=arch, layout=params.layout)

    def affine_backward(name, x, dy):
        x2d = x.reshape(-1, x.shape[-1])
        dy2d = dy.reshape(-1, dy.shape[-1])
        gparams.tensor(f"{name}.w")[...] += x2d.T @ dy2d
        gparams.tensor(f"{name}.b")[...] += dy2d.sum(axis=0)
        return (dy2d @ params.tensor(f"{name}.w").T).reshape(x.shape)

    dg = affine_backward("head", tape.head_input, np.asarray(dout, dtype=tape.output.dtype))
    if tape.dropout_mask is not None:
        dg = dg * tape.dropout_mask

    for i in reversed(range(len(arch.global_widths))):
        dz = dg * tape.global_masks[i]
        dg = affine_backward(f"global{i}", tape.global_inputs[i], dz)

    p = arch.per_point_widths[-1]
    if arch.head == PER_POINT_BINARY:
        dh = dg[:, :, :p].copy()
        dpooled = dg[:, :, p:].sum(axis=1)
    else:
        dh = np.zeros((b, n, p), dtype=dg.dtype)
        dpooled = dg

    # Max-pool routes each pooled feature's gradient to its winning point.
    dh[np.arange(b)[:, None], tape.pool_argmax, np.arange(p)[None, :]] += dpooled

    for i in reversed(range(len(arch.per_point_widths))):
        dz = dh * tape.pp_masks[i]
        dh = affine_backward(f"pp{i}", tape.pp_inputs[i], dz)

    if not np.all(np.isfinite(grads)):
        raise NumericOverflowError("backward pass produced non-finite gradients")
    return grads, dh


def forward_seg(
    params: ModelParams, patch_points, train_mode: bool = False, rng_seed: int = 0
) -> np.ndarray:
    """Per-point binary logits, shape (n, 2), for a single patch."""
    if params.arch.head != PER_POINT_BINARY:
        raise DimensionError("forward_seg requires a per_point_binary head")
    out, _ = forward_batch(params, _check_points(patch_points), train_mode, rng_seed)
    return out[0]


def forward_vec(
    params: ModelParams, points, train_mode: bool = False, rng_seed: int = 0
) -> np.ndarray:
    """Pooled regression output, shape (output_dim,), for one point set."""
    if params.arch.head != VECTOR:
        raise DimensionError("forward_vec requires a vector head")
    out, _ = forward_batch(params, _check_points(points), train_mode, rng_seed)
    return out[0]


@dataclass(frozen=True)
class LossSpec:
    """Pairs a forward pass with a loss and its targets."""

    loss: str  # "cross_entropy" or "smooth_l1"
    targets: np.ndarray
    delta: float = 1.0
    train_mode: bool = False
    rng_seed: int = 0


def loss_and_grad(
    params: ModelParams, points, spec: LossSpec
) -> tuple[float, np.ndarray, np.ndarray]:
    """Loss value, flat parameter gradient, and input gradient."""
    out, tape = forward_batch(params, points, spec.train_mode, spec.rng_seed)
    squeezed = out[0] if np.asarray(points).ndim == 2 else out
    if spec.loss == "cross_entropy":
        value = cross_entropy_per_point(squeezed, spec.targets)
        dout = cross_entropy_grad(squeezed, spec.targets)
    elif spec.loss == "smooth_l1":
        value = smooth_l1(squeezed, spec.targets, spec.delta)
        dout = smooth_l1_grad(squeezed, spec.targets, spec.delta)
    else:
        raise ValueError(f"unknown loss {spec.loss!r}")
    grads, dinput = backprop(tape, dout.reshape(out.shape))
    return value, grads, dinput


def backward(params: ModelParams, points, spec: LossSpec) -> np.ndarray:
    """Exact gradient of the scalar loss with respect to every parameter."""
    _, grads, _ = loss_and_grad(params, points, spec)
    return grads
