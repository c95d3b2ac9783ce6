"""Click-seeded amodal instance segmentation.

A single click inside an object seeds a k x k x k crop; a per-category
point network labels each point in the crop as instance or background.
Training clicks are simulated by sampling random points inside ground
truth boxes, which doubles as data augmentation.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .errors import (
    BelowThresholdError,
    EmptyInstanceError,
    EmptyPatchError,
    InstanceTooSparseError,
    LabelAmbiguityError,
    NumericOverflowError,
)
from .geometry import points_in_box
from .nn import (
    LossSpec,
    ModelParams,
    TrainConfig,
    cross_entropy_per_point,
    default_seg_arch,
    forward_batch,
    init_params,
    loss_and_grad,
    sample_fixed_points,
    softmax,
)
from .nn.loop import iteration_seed, run_training
from .pointcloud import Category, GroundTruthObject, PointCloud, as_point, crop_volume

# Click-centered volume edge length per category, meters. Chosen to exceed
# each class's maximal extent plus worst-case click offset from center.
DEFAULT_VOLUME_EDGE = {
    Category.CAR: 8.0,
    Category.PEDESTRIAN: 4.0,
    Category.CYCLIST: 5.0,
}

DEFAULT_POINT_COUNT = 512
FOREGROUND_THRESHOLD = 0.5

# Instances with fewer scene points than this are excluded from training.
MIN_INSTANCE_POINTS = 5


@dataclass(frozen=True)
class Click:
    """One annotator-provided 3D seed point."""

    scene_id: str
    category: Category
    position: np.ndarray  # (3,) camera frame
    timestamp_ms: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "position", as_point(self.position))
        if not isinstance(self.category, Category):
            object.__setattr__(self, "category", Category(self.category))


@dataclass(frozen=True)
class SegExample:
    """Fixed-size training example: centered points with binary labels."""

    input_points: np.ndarray  # (count, 3), click-centered
    labels: np.ndarray  # (count,) in {0, 1}
    scene_id: str = ""
    instance_id: int = -1
    click: Optional[Click] = None

    def __post_init__(self):
        pts = np.asarray(self.input_points, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if labels.shape[0] != pts.shape[0]:
            raise ValueError("labels must align with input points")
        if not labels.any():
            raise ValueError("a segmentation example needs at least one foreground point")
        object.__setattr__(self, "input_points", pts)
        object.__setattr__(self, "labels", labels)


@dataclass(frozen=True)
class InstanceMask:
    """Segmentation output: scene point indices with foreground confidence."""

    source_indices: np.ndarray
    foreground_confidence: np.ndarray
    click: Click

    def __post_init__(self):
        idx = np.asarray(self.source_indices, dtype=np.int64)
        conf = np.asarray(self.foreground_confidence, dtype=np.float64)
        if idx.size == 0:
            raise ValueError("instance mask may not be empty")
        if conf.shape != idx.shape:
            raise ValueError("confidences must align with indices")
        object.__setattr__(self, "source_indices", idx)
        object.__setattr__(self, "foreground_confidence", conf)

    @property
    def score(self) -> float:
        """Mean foreground confidence; used as the detection score."""
        return float(self.foreground_confidence.mean())


def simulate_click(
    scene: PointCloud, gt: GroundTruthObject, seed: int, scene_id: str = ""
) -> Click:
    """Pick a uniform random scene point inside the ground truth box."""
    inside = points_in_box(scene, gt.box)
    if inside.size == 0:
        raise InstanceTooSparseError(f"no scene points inside {gt.category.value} box")
    rng = np.random.default_rng(seed)
    chosen = int(inside[rng.integers(inside.size)])
    return Click(scene_id=scene_id, category=gt.category, position=scene.points[chosen])


def _clicked_instance(
    gt_objects: Sequence[GroundTruthObject], click: Click
) -> tuple[int, GroundTruthObject]:
    """The instance a click selects: its category's box containing the click.

    With overlapping boxes the nearest centroid wins (deterministic).
    """
    candidates = []
    for i, obj in enumerate(gt_objects):
        if obj.category is not click.category:
            continue
        if points_in_box(click.position[None, :], obj.box).size:
            dist = float(np.linalg.norm(obj.box.centroid - click.position))
            candidates.append((dist, i, obj))
    if not candidates:
        raise LabelAmbiguityError("click lies inside no ground truth box of its category")
    _, idx, obj = min(candidates, key=lambda c: (c[0], c[1]))
    return idx, obj


def make_seg_example(
    scene: PointCloud,
    gt_objects: Sequence[GroundTruthObject],
    click: Click,
    k: float,
    count: int = DEFAULT_POINT_COUNT,
    seed: int = 0,
) -> SegExample:
    """Crop the click volume, label points by clicked-box membership, resample.

    Points of other instances in the volume count as background; only the
    clicked instance is foreground.
    """
    instance_id, instance = _clicked_instance(gt_objects, click)
    patch = crop_volume(scene, click.position, k)
    original = patch.points + patch.click
    inside = np.zeros(len(patch), dtype=bool)
    inside[points_in_box(original, instance.box)] = True
    sampled, index_map = sample_fixed_points(patch.points, count, seed)
    labels = inside[index_map].astype(np.int64)
    if not labels.any():
        raise InstanceTooSparseError("resampling dropped every foreground point")
    return SegExample(
        input_points=sampled,
        labels=labels,
        scene_id=click.scene_id,
        instance_id=instance_id,
        click=click,
    )


def _stack_examples(examples: Sequence[SegExample]) -> tuple[np.ndarray, np.ndarray]:
    x = np.stack([e.input_points for e in examples])
    y = np.stack([e.labels for e in examples])
    return x, y


def train_category_model(
    train_examples: Sequence[SegExample],
    val_examples: Sequence[SegExample],
    config: TrainConfig,
    arch=None,
) -> tuple[ModelParams, dict]:
    """Train one segmentation model on fixed-size examples."""
    if not train_examples:
        raise ValueError("need at least one training example")
    arch = arch or default_seg_arch()
    x_train, y_train = _stack_examples(train_examples)
    x_val, y_val = _stack_examples(val_examples) if val_examples else (None, None)
    rng = np.random.default_rng(config.rng_seed)
    n = x_train.shape[0]

    def batch_fn(params_list, iteration):
        idx = rng.integers(0, n, size=min(config.batch_size, n))
        spec = LossSpec(
            loss="cross_entropy",
            targets=y_train[idx],
            train_mode=True,
            rng_seed=iteration_seed(config.rng_seed, iteration),
        )
        loss, grads, _ = loss_and_grad(params_list[0], x_train[idx], spec)
        return loss, [grads]

    def val_fn(params_list):
        out, _ = forward_batch(params_list[0], x_val)
        return cross_entropy_per_point(out, y_val)

    initial = init_params(arch, config.rng_seed)
    best, history = run_training([initial], batch_fn, val_fn if val_examples else None, config)
    return best[0], history


def train_segmentation(
    train_sets: dict[Category, Sequence[SegExample]],
    val_sets: dict[Category, Sequence[SegExample]],
    config: TrainConfig,
    arch=None,
) -> dict[Category, tuple[ModelParams, dict]]:
    """Train one model per category; categories are seeded independently."""
    results: dict[Category, tuple[ModelParams, dict]] = {}
    for offset, category in enumerate(sorted(train_sets, key=lambda c: c.value)):
        cat_config = replace(config, rng_seed=config.rng_seed + offset)
        try:
            results[category] = train_category_model(
                train_sets[category], val_sets.get(category, ()), cat_config, arch=arch
            )
        except NumericOverflowError as exc:
            raise NumericOverflowError(f"{category.value}: {exc}") from exc
    return results


def _coverage_samples(points: np.ndarray, count: int, seed: int):
    """Fixed-size samples that jointly visit every input point.

    A patch at or under the network input size yields one draw from
    sample_fixed_points. Larger patches are covered by chunking a seeded
    permutation into count-sized pieces (the last chunk wraps around), so
    every source point receives a prediction.
    """
    n = points.shape[0]
    if n <= count:
        yield sample_fixed_points(points, count, seed)
        return
    order = np.random.default_rng(seed).permutation(n)
    for start in range(0, n, count):
        chunk = order[start : start + count]
        if chunk.size < count:  # wrap to keep the network input size fixed
            chunk = np.concatenate([chunk, order[: count - chunk.size]])
        yield points[chunk], chunk


def segment_instance(
    model: ModelParams,
    scene: PointCloud,
    click: Click,
    k: float,
    count: int = DEFAULT_POINT_COUNT,
    threshold: float = FOREGROUND_THRESHOLD,
    resample_seed: int = 0,
) -> InstanceMask:
    """Segment one instance around a click using a trained model.

    Probabilities are scattered back from the fixed-size sample onto the
    patch's source points; duplicated samples vote by max probability.
    Points the sample never visited stay at confidence zero.
    """
    try:
        patch = crop_volume(scene, click.position, k)
    except EmptyPatchError as exc:
        raise EmptyInstanceError(str(exc)) from exc
    confidence = np.zeros(len(patch))
    for sampled, index_map in _coverage_samples(patch.points, count, resample_seed):
        logits = forward_batch(model, sampled[None, :, :])[0][0]
        probs = softmax(logits)[:, 1]
        np.maximum.at(confidence, index_map, probs)
    keep = confidence >= threshold
    if not keep.any():
        raise BelowThresholdError(
            f"no point reached foreground threshold {threshold}",
            max_confidence=float(confidence.max()),
        )
    return InstanceMask(
        source_indices=patch.source_indices[keep],
        foreground_confidence=confidence[keep],
        click=click,
    )
