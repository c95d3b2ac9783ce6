"""Residual centroid regression and template-based amodal box estimation.

Stage two (a T-Net) regresses the box centroid as a residual from the
instance point centroid. Stage three classifies the best of four size
templates and a heading bin, then regresses continuous residuals on top
of both discrete choices. A single best box comes out per instance; no
proposal pruning is involved.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DimensionError, InsufficientDataError
from .geometry import Box3D, box_iou_3d, wrap_angle
from .nn import (
    ModelParams,
    TrainConfig,
    backprop,
    cross_entropy_grad,
    cross_entropy_per_point,
    default_vec_arch,
    forward_batch,
    init_params,
    smooth_l1,
    smooth_l1_grad,
    softmax,
)
from .nn.loop import run_training
from .pointcloud import Category, GroundTruthObject

NUM_TEMPLATES = 4
DEFAULT_HEADING_BINS = 12

# Minimum box dimension after residual decoding, meters.
MIN_DIMENSION = 0.05

BOXNET_POINT_COUNT = 256
TNET_OUTPUT_DIM = 3


@dataclass(frozen=True)
class Template:
    """Class-typical box size prior."""

    category: Category
    h: float
    w: float
    l: float

    def __post_init__(self):
        if not (self.h > 0 and self.w > 0 and self.l > 0):
            raise ValueError("template dimensions must be positive")
        if not isinstance(self.category, Category):
            object.__setattr__(self, "category", Category(self.category))

    @property
    def hwl(self) -> np.ndarray:
        return np.array([self.h, self.w, self.l])


@dataclass(frozen=True)
class BoxLossWeights:
    """Per-term weights of the discrete-continuous box loss."""

    w_centroid_tnet: float = 1.0
    w_centroid_box: float = 1.0
    w_template_cls: float = 1.0
    w_size_res: float = 1.0
    w_heading_cls: float = 1.0
    w_heading_res: float = 2.0

    def __post_init__(self):
        values = (
            self.w_centroid_tnet,
            self.w_centroid_box,
            self.w_template_cls,
            self.w_size_res,
            self.w_heading_cls,
            self.w_heading_res,
        )
        if any(v < 0 for v in values):
            raise ValueError("loss weights must be non-negative")
        if not any(v > 0 for v in values):
            raise ValueError("at least one loss weight must be positive")


@dataclass(frozen=True)
class BoxPrediction:
    """One decoded box plus everything the network actually emitted."""

    box: Box3D
    template_scores: np.ndarray  # (4,) softmax
    heading_bin_scores: np.ndarray  # (nh,) softmax
    template_logits: np.ndarray
    heading_logits: np.ndarray
    centroid_stage1: np.ndarray  # (3,) T-Net result the box net refined
    centroid_residual: np.ndarray  # (3,) stage-two residual
    size_residuals: np.ndarray  # (4, 3) meters, per template
    heading_residuals: np.ndarray  # (nh,) radians, per bin
    template_index: int
    heading_bin: int
    size_clamped: bool = False


def compute_templates(training_gt: Sequence[GroundTruthObject]) -> list[Template]:
    """Four size templates from training boxes: 2 car, 1 pedestrian, 1 cyclist.

    Car sizes get a deterministic 1-D 2-means split on length; the other
    classes use their per-class mean. Returned order: short car, long
    car, pedestrian, cyclist.
    """
    by_category: dict[Category, list[np.ndarray]] = {c: [] for c in Category}
    for obj in training_gt:
        by_category[obj.category].append(np.array([obj.box.h, obj.box.w, obj.box.l]))
    for category in Category:
        if not by_category[category]:
            raise InsufficientDataError(f"no {category.value} boxes in the training split")

    cars = np.stack(by_category[Category.CAR])
    assignment = _two_means_1d(cars[:, 2])
    car_templates = []
    for cluster in (0, 1):
        members = cars[assignment == cluster]
        if members.shape[0] == 0:  # degenerate: all lengths identical
            members = cars
        mean = members.mean(axis=0)
        car_templates.append(Template(Category.CAR, *mean))
    car_templates.sort(key=lambda t: t.l)

    ped = np.stack(by_category[Category.PEDESTRIAN]).mean(axis=0)
    cyc = np.stack(by_category[Category.CYCLIST]).mean(axis=0)
    return [
        car_templates[0],
        car_templates[1],
        Template(Category.PEDESTRIAN, *ped),
        Template(Category.CYCLIST, *cyc),
    ]


def _two_means_1d(values: np.ndarray, max_iters: int = 100) -> np.ndarray:
    """Lloyd's algorithm for two clusters on a line, deterministic init."""
    lo, hi = np.quantile(values, 0.25), np.quantile(values, 0.75)
    centers = np.array([lo, hi], dtype=float)
    assignment = np.zeros(values.shape[0], dtype=int)
    for _ in range(max_iters):
        new_assignment = (np.abs(values - centers[1]) < np.abs(values - centers[0])).astype(int)
        for cluster in (0, 1):
            members = values[new_assignment == cluster]
            if members.size:
                centers[cluster] = members.mean()
        if np.array_equal(new_assignment, assignment):
            break
        assignment = new_assignment
    return assignment


def save_templates(path, templates: Sequence[Template]) -> None:
    data = [{"category": t.category.value, "h": t.h, "w": t.w, "l": t.l} for t in templates]
    Path(path).write_text(json.dumps(data, indent=2) + "\n")


def load_templates(path) -> list[Template]:
    data = json.loads(Path(path).read_text())
    return [Template(category=Category(d["category"]), h=d["h"], w=d["w"], l=d["l"]) for d in data]


def encode_heading(ry: float, nh: int = DEFAULT_HEADING_BINS) -> tuple[int, float]:
    """Map a yaw to (bin index, residual from that bin's center).

    Bins partition (-pi, pi] uniformly with bin 0 centered at 0; the
    residual lands in (-binwidth/2, binwidth/2].
    """
    if nh < 1:
        raise ValueError("need at least one heading bin")
    width = 2.0 * math.pi / nh
    raw = math.ceil((ry - width / 2.0) / width)
    bin_index = int(raw % nh)
    residual = wrap_angle(ry - bin_index * width)
    return bin_index, residual


def decode_heading(bin_index: int, residual: float, nh: int = DEFAULT_HEADING_BINS) -> float:
    """Inverse of encode_heading, wrapped to (-pi, pi]."""
    width = 2.0 * math.pi / nh
    return wrap_angle(bin_index * width + residual)


def heading_bin_center(bin_index: int, nh: int = DEFAULT_HEADING_BINS) -> float:
    return wrap_angle(bin_index * (2.0 * math.pi / nh))


def assign_gt_template(gt_box: Box3D, templates: Sequence[Template]) -> int:
    """Index of the template with greatest 3D IoU against the ground truth.

    Template boxes are co-centered and co-oriented with the ground truth
    before comparison; ties go to the lowest index.
    """
    ious = []
    for t in templates:
        candidate = Box3D(
            cx=gt_box.cx, cy=gt_box.cy, cz=gt_box.cz, h=t.h, w=t.w, l=t.l, ry=gt_box.ry
        )
        ious.append(box_iou_3d(gt_box, candidate))
    return int(np.argmax(ious))


def tnet_centroid(model: ModelParams, mask_points: np.ndarray) -> np.ndarray:
    """Stage-one centroid: instance point mean plus a regressed residual.

    The network sees points centered on their own mean, which makes the
    estimate translation-equivariant by construction.
    """
    pts = np.asarray(mask_points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 1:
        raise DimensionError(f"expected (n, 3) mask points, got {pts.shape}")
    mean = pts.mean(axis=0)
    residual = forward_batch(model, (pts - mean)[None, :, :])[0][0]
    return mean + residual


def boxnet_output_dim(nh: int = DEFAULT_HEADING_BINS) -> int:
    """centroid residual + template scores + size residuals + heading."""
    return 3 + NUM_TEMPLATES + 3 * NUM_TEMPLATES + 2 * nh


def _parse_box_output(raw: np.ndarray, nh: int) -> dict[str, np.ndarray]:
    batched = np.atleast_2d(raw)
    cursor = 0

    def take(n):
        nonlocal cursor
        chunk = batched[:, cursor : cursor + n]
        cursor += n
        return chunk

    parts = {
        "centroid_residual": take(3),
        "template_logits": take(NUM_TEMPLATES),
        "size_residuals": take(3 * NUM_TEMPLATES).reshape(-1, NUM_TEMPLATES, 3),
        "heading_logits": take(nh),
        "heading_residuals": take(nh),
    }
    if cursor != batched.shape[1]:
        raise DimensionError(
            f"box head emitted {batched.shape[1]} values, expected {boxnet_output_dim(nh)}"
        )
    return parts


def box_estimate(
    model: ModelParams,
    mask_points: np.ndarray,
    centroid_stage1: np.ndarray,
    templates: Sequence[Template],
    nh: int = DEFAULT_HEADING_BINS,
) -> BoxPrediction:
    """Decode the single best box for one instance.

    The network consumes points normalized by the stage-one centroid and
    emits a second centroid residual, template scores with per-template
    size residuals, and heading bin scores with per-bin residuals. The
    final box takes the argmax template and bin plus their residuals.
    """
    if len(templates) != NUM_TEMPLATES:
        raise ValueError(f"expected {NUM_TEMPLATES} templates, got {len(templates)}")
    pts = np.asarray(mask_points, dtype=np.float64)
    stage1 = np.asarray(centroid_stage1, dtype=np.float64).reshape(3)
    raw = forward_batch(model, (pts - stage1)[None, :, :])[0][0]
    parts = _parse_box_output(raw, nh)

    centroid_residual = parts["centroid_residual"][0]
    template_logits = parts["template_logits"][0]
    size_residuals = parts["size_residuals"][0]
    heading_logits = parts["heading_logits"][0]
    heading_residuals = parts["heading_residuals"][0]

    template_index = int(np.argmax(template_logits))
    heading_bin = int(np.argmax(heading_logits))
    centroid = stage1 + centroid_residual
    size = templates[template_index].hwl + size_residuals[template_index]
    clamped = bool(np.any(size <= 0))
    size = np.maximum(size, MIN_DIMENSION)
    ry = decode_heading(heading_bin, float(heading_residuals[heading_bin]), nh)

    box = Box3D(
        cx=float(centroid[0]),
        cy=float(centroid[1]),
        cz=float(centroid[2]),
        h=float(size[0]),
        w=float(size[1]),
        l=float(size[2]),
        ry=ry,
    )
    return BoxPrediction(
        box=box,
        template_scores=softmax(template_logits),
        heading_bin_scores=softmax(heading_logits),
        template_logits=template_logits,
        heading_logits=heading_logits,
        centroid_stage1=stage1,
        centroid_residual=centroid_residual,
        size_residuals=size_residuals,
        heading_residuals=heading_residuals,
        template_index=template_index,
        heading_bin=heading_bin,
        size_clamped=clamped,
    )


def box_targets(
    gt_box: Box3D, templates: Sequence[Template], nh: int = DEFAULT_HEADING_BINS
) -> dict:
    """Supervision targets for one ground truth box."""
    template_index = assign_gt_template(gt_box, templates)
    heading_bin, heading_residual = encode_heading(gt_box.ry, nh)
    return {
        "centroid": gt_box.centroid,
        "template_index": template_index,
        "size_residual": np.array([gt_box.h, gt_box.w, gt_box.l]) - templates[template_index].hwl,
        "heading_bin": heading_bin,
        "heading_residual": heading_residual,
    }


def box_loss(
    pred: BoxPrediction,
    gt_box: Box3D,
    templates: Sequence[Template],
    weights: BoxLossWeights = BoxLossWeights(),
    nh: int = DEFAULT_HEADING_BINS,
) -> tuple[float, dict[str, float]]:
    """Weighted discrete-continuous loss with a per-term breakdown.

    The breakdown holds the already-weighted terms, so their sum equals
    the returned scalar exactly. Size and heading residuals are
    supervised only on the ground truth template and bin.
    """
    targets = box_targets(gt_box, templates, nh)
    final_centroid = pred.centroid_stage1 + pred.centroid_residual
    breakdown = {
        "centroid_tnet": weights.w_centroid_tnet
        * smooth_l1(pred.centroid_stage1, targets["centroid"]),
        "centroid_box": weights.w_centroid_box * smooth_l1(final_centroid, targets["centroid"]),
        "template_cls": weights.w_template_cls
        * cross_entropy_per_point(pred.template_logits, targets["template_index"]),
        "size_res": weights.w_size_res
        * smooth_l1(pred.size_residuals[targets["template_index"]], targets["size_residual"]),
        "heading_cls": weights.w_heading_cls
        * cross_entropy_per_point(pred.heading_logits, targets["heading_bin"]),
        "heading_res": weights.w_heading_res
        * smooth_l1(
            np.array([pred.heading_residuals[targets["heading_bin"]]]),
            np.array([targets["heading_residual"]]),
        ),
    }
    return float(sum(breakdown.values())), breakdown


# ---------------------------------------------------------------------------
# Joint training of the T-Net and box network
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoxfitExample:
    """Fixed-size instance points plus the ground truth box."""

    points: np.ndarray  # (count, 3) camera frame
    gt_box: Box3D


@dataclass
class _BoxBatchTargets:
    centroid: np.ndarray  # (B, 3)
    template_index: np.ndarray  # (B,)
    size_residual: np.ndarray  # (B, 3)
    heading_bin: np.ndarray  # (B,)
    heading_residual: np.ndarray  # (B,)


def _batch_targets(
    boxes: Sequence[Box3D], templates: Sequence[Template], nh: int
) -> _BoxBatchTargets:
    rows = [box_targets(b, templates, nh) for b in boxes]
    return _BoxBatchTargets(
        centroid=np.stack([r["centroid"] for r in rows]),
        template_index=np.array([r["template_index"] for r in rows]),
        size_residual=np.stack([r["size_residual"] for r in rows]),
        heading_bin=np.array([r["heading_bin"] for r in rows]),
        heading_residual=np.array([r["heading_residual"] for r in rows]),
    )


def _batched_box_loss(
    raw: np.ndarray,
    stage1: np.ndarray,
    targets: _BoxBatchTargets,
    weights: BoxLossWeights,
    nh: int,
    with_grad: bool = True,
):
    """Mean per-example loss over a batch, plus gradients for training.

    Returns (loss, d_raw, d_stage1); gradient arrays are None when
    with_grad is false.
    """
    b = raw.shape[0]
    parts = _parse_box_output(raw, nh)
    rows = np.arange(b)
    final_centroid = stage1 + parts["centroid_residual"]
    size_pred = parts["size_residuals"][rows, targets.template_index]
    heading_pred = parts["heading_residuals"][rows, targets.heading_bin]

    loss = (
        weights.w_centroid_tnet * smooth_l1(stage1, targets.centroid)
        + weights.w_centroid_box * smooth_l1(final_centroid, targets.centroid)
        + weights.w_template_cls
        * cross_entropy_per_point(parts["template_logits"], targets.template_index)
        + weights.w_size_res * smooth_l1(size_pred, targets.size_residual)
        + weights.w_heading_cls
        * cross_entropy_per_point(parts["heading_logits"], targets.heading_bin)
        + weights.w_heading_res * smooth_l1(heading_pred, targets.heading_residual)
    )
    if not with_grad:
        return float(loss), None, None

    d_raw = np.zeros_like(raw)
    d_parts = _parse_box_output(d_raw, nh)  # views into d_raw

    d_final = weights.w_centroid_box * smooth_l1_grad(final_centroid, targets.centroid)
    d_parts["centroid_residual"][...] = d_final
    d_stage1 = d_final + weights.w_centroid_tnet * smooth_l1_grad(stage1, targets.centroid)

    d_parts["template_logits"][...] = weights.w_template_cls * cross_entropy_grad(
        parts["template_logits"], targets.template_index
    )
    d_parts["size_residuals"][rows, targets.template_index] = (
        weights.w_size_res * smooth_l1_grad(size_pred, targets.size_residual)
    )
    d_parts["heading_logits"][...] = weights.w_heading_cls * cross_entropy_grad(
        parts["heading_logits"], targets.heading_bin
    )
    d_parts["heading_residuals"][rows, targets.heading_bin] = (
        weights.w_heading_res * smooth_l1_grad(heading_pred, targets.heading_residual)
    )
    return float(loss), d_raw, d_stage1


def _pipeline_loss_and_grads(
    tnet: ModelParams,
    boxnet: ModelParams,
    points: np.ndarray,  # (B, n, 3)
    targets: _BoxBatchTargets,
    weights: BoxLossWeights,
    nh: int,
    with_grad: bool = True,
):
    """Joint loss of both stages, with exact gradients flowing through the
    stage-one centroid into the box network's input normalization."""
    means = points.mean(axis=1)
    centered = points - means[:, None, :]
    residual1, tnet_tape = forward_batch(tnet, centered)
    stage1 = means + residual1

    box_input = points - stage1[:, None, :]
    raw, box_tape = forward_batch(boxnet, box_input)
    loss, d_raw, d_stage1 = _batched_box_loss(raw, stage1, targets, weights, nh, with_grad)
    if not with_grad:
        return loss, None, None

    box_grads, d_box_input = backprop(box_tape, d_raw)
    d_residual1 = d_stage1 - d_box_input.sum(axis=1)
    tnet_grads, _ = backprop(tnet_tape, d_residual1)
    return loss, tnet_grads, box_grads


def train_boxfit(
    train_examples: Sequence[BoxfitExample],
    val_examples: Sequence[BoxfitExample],
    templates: Sequence[Template],
    config: TrainConfig,
    weights: BoxLossWeights = BoxLossWeights(),
    nh: int = DEFAULT_HEADING_BINS,
    tnet_arch=None,
    boxnet_arch=None,
) -> tuple[ModelParams, ModelParams, dict]:
    """Jointly train the T-Net and box network on the summed loss."""
    if not train_examples:
        raise ValueError("need at least one training example")
    x_train = np.stack([e.points for e in train_examples])
    t_train = _batch_targets([e.gt_box for e in train_examples], templates, nh)
    if val_examples:
        x_val = np.stack([e.points for e in val_examples])
        t_val = _batch_targets([e.gt_box for e in val_examples], templates, nh)

    tnet_arch = tnet_arch or default_vec_arch(TNET_OUTPUT_DIM)
    boxnet_arch = boxnet_arch or default_vec_arch(boxnet_output_dim(nh))
    rng = np.random.default_rng(config.rng_seed)
    n = x_train.shape[0]

    def select(targets: _BoxBatchTargets, idx) -> _BoxBatchTargets:
        return _BoxBatchTargets(
            centroid=targets.centroid[idx],
            template_index=targets.template_index[idx],
            size_residual=targets.size_residual[idx],
            heading_bin=targets.heading_bin[idx],
            heading_residual=targets.heading_residual[idx],
        )

    def batch_fn(params_list, iteration):
        idx = rng.integers(0, n, size=min(config.batch_size, n))
        loss, tnet_grads, box_grads = _pipeline_loss_and_grads(
            params_list[0], params_list[1], x_train[idx], select(t_train, idx), weights, nh
        )
        return loss, [tnet_grads, box_grads]

    def val_fn(params_list):
        loss, _, _ = _pipeline_loss_and_grads(
            params_list[0], params_list[1], x_val, t_val, weights, nh, with_grad=False
        )
        return loss

    initial = [init_params(tnet_arch, config.rng_seed), init_params(boxnet_arch, config.rng_seed + 1)]
    best, history = run_training(
        initial, batch_fn, val_fn if val_examples else None, config
    )
    return best[0], best[1], history
