"""Architecture descriptors and flat parameter storage.

Both networks are PointNet-style: a shared per-point affine+ReLU stack,
a max-pool over points into a global feature, then a global stack and a
head. The segmentation variant concatenates the global feature back onto
every per-point feature and emits two logits per point; the vector
variant maps the pooled feature to a fixed-size output vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterator

import numpy as np

PER_POINT_BINARY = "per_point_binary"
VECTOR = "vector"


@dataclass(frozen=True)
class ArchDescriptor:
    """Widths and head selection for one subnetwork."""

    per_point_widths: tuple[int, ...]
    global_widths: tuple[int, ...]
    head: str
    output_dim: int = 2
    dropout_keep: float = 0.7

    def __post_init__(self):
        object.__setattr__(self, "per_point_widths", tuple(int(w) for w in self.per_point_widths))
        object.__setattr__(self, "global_widths", tuple(int(w) for w in self.global_widths))
        if not self.per_point_widths or not self.global_widths:
            raise ValueError("both stacks need at least one layer")
        if any(w <= 0 for w in self.per_point_widths + self.global_widths):
            raise ValueError("layer widths must be positive")
        if self.head not in (PER_POINT_BINARY, VECTOR):
            raise ValueError(f"unknown head {self.head!r}")
        if self.head == VECTOR and self.output_dim < 1:
            raise ValueError("vector head needs output_dim >= 1")
        if self.head == PER_POINT_BINARY:
            object.__setattr__(self, "output_dim", 2)
        if not (0.0 < self.dropout_keep <= 1.0):
            raise ValueError("dropout_keep must be in (0, 1]")

    def layer_shapes(self) -> Iterator[tuple[str, tuple[int, ...]]]:
        """Yield (name, shape) for every weight and bias, in storage order."""
        fan_in = 3
        for i, width in enumerate(self.per_point_widths):
            yield f"pp{i}.w", (fan_in, width)
            yield f"pp{i}.b", (width,)
            fan_in = width
        pooled = self.per_point_widths[-1]
        # The segmentation head runs the global stack per point on the
        # concatenation of point feature and pooled feature.
        fan_in = 2 * pooled if self.head == PER_POINT_BINARY else pooled
        for i, width in enumerate(self.global_widths):
            yield f"global{i}.w", (fan_in, width)
            yield f"global{i}.b", (width,)
            fan_in = width
        yield "head.w", (fan_in, self.output_dim)
        yield "head.b", (self.output_dim,)

    def parameter_count(self) -> int:
        return sum(int(np.prod(shape)) for _, shape in self.layer_shapes())

    def to_dict(self) -> dict:
        return {
            "per_point_widths": list(self.per_point_widths),
            "global_widths": list(self.global_widths),
            "head": self.head,
            "output_dim": self.output_dim,
            "dropout_keep": self.dropout_keep,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ArchDescriptor":
        return cls(
            per_point_widths=tuple(data["per_point_widths"]),
            global_widths=tuple(data["global_widths"]),
            head=data["head"],
            output_dim=int(data.get("output_dim", 2)),
            dropout_keep=float(data.get("dropout_keep", 0.7)),
        )


def build_layout(arch: ArchDescriptor) -> dict[str, tuple[int, tuple[int, ...]]]:
    """Map each layer tensor to its (offset, shape) slice of the flat vector."""
    layout: dict[str, tuple[int, tuple[int, ...]]] = {}
    offset = 0
    for name, shape in arch.layer_shapes():
        layout[name] = (offset, shape)
        offset += int(np.prod(shape))
    return layout


@dataclass(frozen=True)
class ModelParams:
    """Flat parameter vector plus the architecture it parameterizes."""

    values: np.ndarray
    arch: ArchDescriptor
    layout: dict[str, tuple[int, tuple[int, ...]]] = field(default_factory=dict)

    def __post_init__(self):
        if not self.layout:
            object.__setattr__(self, "layout", build_layout(self.arch))
        values = np.asarray(self.values)
        if values.ndim != 1:
            raise ValueError("parameter vector must be one-dimensional")
        expected = self.arch.parameter_count()
        if values.shape[0] != expected:
            raise ValueError(f"expected {expected} parameters, got {values.shape[0]}")
        if not np.all(np.isfinite(values)):
            raise ValueError("parameters must be finite")
        object.__setattr__(self, "values", values)

    def tensor(self, name: str) -> np.ndarray:
        """A view of one layer tensor inside the flat vector."""
        offset, shape = self.layout[name]
        return self.values[offset : offset + int(np.prod(shape))].reshape(shape)

    def with_values(self, values: np.ndarray) -> "ModelParams":
        return replace(self, values=values)


def init_params(arch: ArchDescriptor, seed: int) -> ModelParams:
    """Seed-deterministic Glorot-uniform weights with zero biases."""
    rng = np.random.default_rng(seed)
    chunks = []
    for name, shape in arch.layer_shapes():
        if name.endswith(".w"):
            fan_in, fan_out = shape
            bound = math.sqrt(6.0 / (fan_in + fan_out))
            chunks.append(rng.uniform(-bound, bound, size=int(np.prod(shape))))
        else:
            chunks.append(np.zeros(int(np.prod(shape))))
    return ModelParams(values=np.concatenate(chunks), arch=arch)


# Desk-scale defaults: minutes of CPU training instead of GPU hours.
def default_seg_arch(dropout_keep: float = 0.7) -> ArchDescriptor:
    return ArchDescriptor(
        per_point_widths=(32, 64, 128),
        global_widths=(128, 64),
        head=PER_POINT_BINARY,
        dropout_keep=dropout_keep,
    )


def default_vec_arch(output_dim: int, dropout_keep: float = 0.7) -> ArchDescriptor:
    return ArchDescriptor(
        per_point_widths=(32, 64, 128),
        global_widths=(128, 64),
        head=VECTOR,
        output_dim=output_dim,
        dropout_keep=dropout_keep,
    )
