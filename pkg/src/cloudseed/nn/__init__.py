"""Self-contained point-set neural core: forward, backward, losses, ADAM."""

from .arch import (
    PER_POINT_BINARY,
    VECTOR,
    ArchDescriptor,
    ModelParams,
    build_layout,
    default_seg_arch,
    default_vec_arch,
    init_params,
)
from .checkpoint import (
    CHECKPOINT_MAGIC,
    decode_checkpoint,
    encode_checkpoint,
    load_checkpoint,
    save_checkpoint,
)
from .core import LossSpec, backprop, backward, forward_batch, forward_seg, forward_vec, loss_and_grad
from .losses import (
    cross_entropy_grad,
    cross_entropy_per_point,
    log_softmax,
    smooth_l1,
    smooth_l1_grad,
    softmax,
)
from .optim import AdamState, TrainConfig, adam_step, lr_at
from .sampling import sample_fixed_points

__all__ = [
    "PER_POINT_BINARY",
    "VECTOR",
    "ArchDescriptor",
    "ModelParams",
    "build_layout",
    "default_seg_arch",
    "default_vec_arch",
    "init_params",
    "CHECKPOINT_MAGIC",
    "decode_checkpoint",
    "encode_checkpoint",
    "load_checkpoint",
    "save_checkpoint",
    "LossSpec",
    "backprop",
    "backward",
    "forward_batch",
    "forward_seg",
    "forward_vec",
    "loss_and_grad",
    "cross_entropy_grad",
    "cross_entropy_per_point",
    "log_softmax",
    "smooth_l1",
    "smooth_l1_grad",
    "softmax",
    "AdamState",
    "TrainConfig",
    "adam_step",
    "lr_at",
    "sample_fixed_points",
]
