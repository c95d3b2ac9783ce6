"""End-to-end glue: dataset builders, inference, and the synthetic benchmark.

The full loop mirrors the production annotation path: simulate (or load)
clicks, build per-category segmentation datasets, train the three
subnetworks, run click-seeded inference on held-out scenes, and score
the results.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .boxfit import (
    BOXNET_POINT_COUNT,
    DEFAULT_HEADING_BINS,
    BoxfitExample,
    BoxLossWeights,
    Template,
    box_estimate,
    compute_templates,
    tnet_centroid,
    train_boxfit,
)
from .errors import (
    BelowThresholdError,
    EmptyInstanceError,
    InstanceTooSparseError,
    LabelAmbiguityError,
)
from .evaluation import DetectionResult
from .geometry import Box3D, points_in_box
from .nn import ModelParams, TrainConfig, sample_fixed_points
from .pointcloud import Category, GroundTruthObject, PointCloud
from .segmentation import (
    DEFAULT_POINT_COUNT,
    DEFAULT_VOLUME_EDGE,
    MIN_INSTANCE_POINTS,
    Click,
    InstanceMask,
    SegExample,
    make_seg_example,
    segment_instance,
    simulate_click,
    train_segmentation,
)

Scene = tuple[PointCloud, list[GroundTruthObject]]


def _derived_seed(*parts) -> int:
    return int(np.random.SeedSequence(tuple(int(p) for p in parts)).generate_state(1)[0])


def _scene_number(scene_id: str) -> int:
    digits = "".join(ch for ch in scene_id if ch.isdigit())
    return int(digits) if digits else abs(hash(scene_id)) % (2**31)


@dataclass(frozen=True)
class ClickManifestEntry:
    """One simulated click, referencing its scene and instance."""

    scene_id: str
    instance_index: int
    category: Category
    position: tuple[float, float, float]
    seed: int

    def to_json(self) -> str:
        return json.dumps(
            {
                "scene_id": self.scene_id,
                "instance": self.instance_index,
                "category": self.category.value,
                "click": list(self.position),
                "seed": self.seed,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, line: str) -> "ClickManifestEntry":
        d = json.loads(line)
        return cls(
            scene_id=d["scene_id"],
            instance_index=int(d["instance"]),
            category=Category(d["category"]),
            position=tuple(float(v) for v in d["click"]),
            seed=int(d["seed"]),
        )

    def click(self) -> Click:
        return Click(
            scene_id=self.scene_id, category=self.category, position=np.array(self.position)
        )


def simulate_scene_clicks(
    scenes: dict[str, Scene],
    seed: int,
    clicks_per_instance: int = 1,
    categories: Optional[set[Category]] = None,
) -> list[ClickManifestEntry]:
    """Simulate clicks on every sufficiently dense instance of every scene."""
    entries: list[ClickManifestEntry] = []
    for scene_id in sorted(scenes):
        cloud, objects = scenes[scene_id]
        for instance_index, obj in enumerate(objects):
            if categories and obj.category not in categories:
                continue
            if points_in_box(cloud, obj.box).size < MIN_INSTANCE_POINTS:
                continue
            for c in range(clicks_per_instance):
                click_seed = _derived_seed(seed, _scene_number(scene_id), instance_index, c)
                click = simulate_click(cloud, obj, click_seed, scene_id=scene_id)
                entries.append(
                    ClickManifestEntry(
                        scene_id=scene_id,
                        instance_index=instance_index,
                        category=obj.category,
                        position=tuple(float(v) for v in click.position),
                        seed=click_seed,
                    )
                )
    return entries


def save_click_manifest(path, entries: Sequence[ClickManifestEntry]) -> None:
    Path(path).write_text("".join(e.to_json() + "\n" for e in entries))


def load_click_manifest(path) -> list[ClickManifestEntry]:
    lines = Path(path).read_text().splitlines()
    return [ClickManifestEntry.from_json(line) for line in lines if line.strip()]


def build_seg_examples(
    scenes: dict[str, Scene],
    entries: Sequence[ClickManifestEntry],
    k_map: dict[Category, float] = DEFAULT_VOLUME_EDGE,
    count: int = DEFAULT_POINT_COUNT,
) -> dict[Category, list[SegExample]]:
    """Turn click manifest entries into fixed-size labeled examples."""
    examples: dict[Category, list[SegExample]] = {}
    for entry in entries:
        cloud, objects = scenes[entry.scene_id]
        try:
            example = make_seg_example(
                cloud,
                objects,
                entry.click(),
                k=k_map[entry.category],
                count=count,
                seed=entry.seed,
            )
        except (InstanceTooSparseError, LabelAmbiguityError):
            continue
        examples.setdefault(entry.category, []).append(example)
    return examples


def build_boxfit_examples(
    scenes: dict[str, Scene],
    category: Category,
    count: int = BOXNET_POINT_COUNT,
    seed: int = 0,
) -> list[BoxfitExample]:
    """Instance points from ground truth boxes, resampled to a fixed size."""
    examples: list[BoxfitExample] = []
    for scene_id in sorted(scenes):
        cloud, objects = scenes[scene_id]
        for instance_index, obj in enumerate(objects):
            if obj.category is not category:
                continue
            inside = points_in_box(cloud, obj.box)
            if inside.size < MIN_INSTANCE_POINTS:
                continue
            sample_seed = _derived_seed(seed, _scene_number(scene_id), instance_index)
            sampled, _ = sample_fixed_points(cloud.points[inside], count, sample_seed)
            examples.append(BoxfitExample(points=sampled, gt_box=obj.box))
    return examples


def build_boxfit_examples_from_masks(
    scenes: dict[str, Scene],
    seg_model: ModelParams,
    entries: Sequence[ClickManifestEntry],
    k_map: dict[Category, float] = DEFAULT_VOLUME_EDGE,
    seg_count: int = DEFAULT_POINT_COUNT,
    box_count: int = BOXNET_POINT_COUNT,
    seed: int = 0,
) -> list[BoxfitExample]:
    """Box training pairs whose points come from predicted masks.

    Running the trained segmentation model over the training clicks gives
    the box stage the same input distribution it will see at inference,
    instead of idealized ground-truth instance points.
    """
    examples: list[BoxfitExample] = []
    for entry in entries:
        cloud, objects = scenes[entry.scene_id]
        try:
            mask = segment_instance(
                seg_model, cloud, entry.click(), k=k_map[entry.category], count=seg_count
            )
        except (EmptyInstanceError, BelowThresholdError):
            continue
        points = cloud.points[mask.source_indices]
        if points.shape[0] < MIN_INSTANCE_POINTS:
            continue
        sample_seed = _derived_seed(seed, _scene_number(entry.scene_id), entry.instance_index, 1)
        sampled, _ = sample_fixed_points(points, box_count, sample_seed)
        examples.append(
            BoxfitExample(points=sampled, gt_box=objects[entry.instance_index].box)
        )
    return examples


def split_scenes(scenes: dict[str, Scene], val_fraction: float = 0.1) -> tuple[dict, dict]:
    """Deterministic scene-level split: every k-th scene id goes to val."""
    ids = sorted(scenes)
    if len(ids) < 2 or val_fraction <= 0:
        return dict(scenes), {}
    stride = max(2, int(round(1.0 / val_fraction)))
    val_ids = set(ids[stride - 1 :: stride])
    train = {sid: scenes[sid] for sid in ids if sid not in val_ids}
    val = {sid: scenes[sid] for sid in ids if sid in val_ids}
    return train, val


@dataclass
class PipelineModels:
    """Trained models for one or more categories plus the templates."""

    seg_models: dict[Category, ModelParams]
    tnet: ModelParams
    boxnet: ModelParams
    templates: list[Template]
    nh: int = DEFAULT_HEADING_BINS
    k_map: dict[Category, float] = field(default_factory=lambda: dict(DEFAULT_VOLUME_EDGE))
    seg_count: int = DEFAULT_POINT_COUNT
    box_count: int = BOXNET_POINT_COUNT


def detection_score(mask: InstanceMask, mask_points: np.ndarray, box: Box3D) -> float:
    """Detection confidence: mask confidence times box/mask consistency.

    The mean foreground confidence alone saturates near 1 for every
    detection; multiplying by the fraction of mask points the predicted
    box actually contains ranks merged or mis-fit instances below clean
    ones, which is what average precision needs from a score.
    """
    contained = points_in_box(mask_points, box).size / mask_points.shape[0]
    return float(mask.score * contained)


def infer_instance(
    models: PipelineModels, cloud: PointCloud, click: Click
) -> tuple[InstanceMask, Box3D, float]:
    """Run the three stages for one click; returns (mask, box, score)."""
    mask = segment_instance(
        models.seg_models[click.category],
        cloud,
        click,
        k=models.k_map[click.category],
        count=models.seg_count,
    )
    full_mask_points = cloud.points[mask.source_indices]
    mask_points = full_mask_points
    if mask_points.shape[0] > models.box_count:
        mask_points, _ = sample_fixed_points(mask_points, models.box_count, 0)
    stage1 = tnet_centroid(models.tnet, mask_points)
    prediction = box_estimate(models.boxnet, mask_points, stage1, models.templates, models.nh)
    return mask, prediction.box, detection_score(mask, full_mask_points, prediction.box)


def infer_scenes(
    models: PipelineModels,
    scenes: dict[str, Scene],
    entries: Sequence[ClickManifestEntry],
) -> list[DetectionResult]:
    """Click-seeded inference over a scene set; unreachable clicks are skipped."""
    detections: list[DetectionResult] = []
    for entry in entries:
        cloud, _ = scenes[entry.scene_id]
        try:
            mask, box, score = infer_instance(models, cloud, entry.click())
        except (EmptyInstanceError, BelowThresholdError, InstanceTooSparseError):
            continue
        detections.append(
            DetectionResult(
                scene_id=entry.scene_id,
                category=entry.category,
                box=box,
                score=score,
                mask=mask,
            )
        )
    return detections


# ---------------------------------------------------------------------------
# Detection result serialization (JSON lines)
# ---------------------------------------------------------------------------


def detection_to_json(det: DetectionResult) -> str:
    b = det.box
    payload = {
        "scene_id": det.scene_id,
        "category": det.category.value,
        "box": {"cx": b.cx, "cy": b.cy, "cz": b.cz, "h": b.h, "w": b.w, "l": b.l, "ry": b.ry},
        "score": det.score,
    }
    if det.mask is not None:
        payload["mask_indices"] = [int(i) for i in det.mask.source_indices]
        payload["mask_confidence"] = [float(c) for c in det.mask.foreground_confidence]
        payload["click"] = [float(v) for v in det.mask.click.position]
    return json.dumps(payload, sort_keys=True)


def detection_from_json(line: str) -> DetectionResult:
    d = json.loads(line)
    mask = None
    if "mask_indices" in d:
        mask = InstanceMask(
            source_indices=np.array(d["mask_indices"], dtype=np.int64),
            foreground_confidence=np.array(d["mask_confidence"]),
            click=Click(
                scene_id=d["scene_id"],
                category=Category(d["category"]),
                position=np.array(d.get("click", [0.0, 0.0, 0.0])),
            ),
        )
    return DetectionResult(
        scene_id=d["scene_id"],
        category=Category(d["category"]),
        box=Box3D(**d["box"]),
        score=float(d["score"]),
        mask=mask,
    )


def save_detections(path, detections: Sequence[DetectionResult]) -> None:
    Path(path).write_text("".join(detection_to_json(d) + "\n" for d in detections))


def load_detections(path) -> list[DetectionResult]:
    lines = Path(path).read_text().splitlines()
    return [detection_from_json(line) for line in lines if line.strip()]


# ---------------------------------------------------------------------------
# Training drivers
# ---------------------------------------------------------------------------


def train_pipeline(
    train_scenes: dict[str, Scene],
    category: Category,
    seg_config: TrainConfig,
    box_config: TrainConfig,
    k_map: dict[Category, float] = DEFAULT_VOLUME_EDGE,
    seg_count: int = DEFAULT_POINT_COUNT,
    box_count: int = BOXNET_POINT_COUNT,
    clicks_per_instance: int = 1,
    nh: int = DEFAULT_HEADING_BINS,
    loss_weights: BoxLossWeights = BoxLossWeights(),
    templates: Optional[list[Template]] = None,
) -> tuple[PipelineModels, dict]:
    """Train segmentation, T-Net, and box net for one category."""
    fit_scenes, holdout_scenes = split_scenes(train_scenes)

    entries_train = simulate_scene_clicks(
        fit_scenes, seg_config.rng_seed, clicks_per_instance, categories={category}
    )
    entries_val = simulate_scene_clicks(holdout_scenes, seg_config.rng_seed + 1, 1, {category})
    seg_train = build_seg_examples(fit_scenes, entries_train, k_map, seg_count)
    seg_val = build_seg_examples(holdout_scenes, entries_val, k_map, seg_count)
    seg_results = train_segmentation(seg_train, seg_val, seg_config)
    seg_params, seg_history = seg_results[category]

    if templates is None:
        all_gt = [o for _, objs in train_scenes.values() for o in objs]
        templates = _templates_with_fallback(all_gt)

    # Clean ground-truth instances plus predicted masks: the latter match
    # the inference-time input distribution of the box stage.
    box_train = build_boxfit_examples(fit_scenes, category, box_count, box_config.rng_seed)
    box_train += build_boxfit_examples_from_masks(
        fit_scenes, seg_params, entries_train, k_map, seg_count, box_count, box_config.rng_seed
    )
    box_val = build_boxfit_examples_from_masks(
        holdout_scenes, seg_params, entries_val, k_map, seg_count, box_count,
        box_config.rng_seed + 1,
    )
    if not box_val:
        box_val = build_boxfit_examples(holdout_scenes, category, box_count, box_config.rng_seed + 1)
    tnet, boxnet, box_history = train_boxfit(
        box_train, box_val, templates, box_config, weights=loss_weights, nh=nh
    )

    models = PipelineModels(
        seg_models={category: seg_params},
        tnet=tnet,
        boxnet=boxnet,
        templates=templates,
        nh=nh,
        k_map=dict(k_map),
        seg_count=seg_count,
        box_count=box_count,
    )
    history = {"segmentation": seg_history, "boxfit": box_history}
    return models, history


def _templates_with_fallback(gt: Sequence[GroundTruthObject]) -> list[Template]:
    """compute_templates needs every category; fill gaps with nominal sizes."""
    from .synth import NOMINAL_SIZES

    present = {o.category for o in gt}
    padded = list(gt)
    for category in Category:
        if category not in present:
            h, w, l = NOMINAL_SIZES[category]
            padded.append(
                GroundTruthObject(
                    category=category, box=Box3D(cx=0, cy=0, cz=10, h=h, w=w, l=l, ry=0)
                )
            )
    return compute_templates(padded)
