"""Measurement suite: instance IoU, centroid error, box IoU, AP, timing.

The annotation pipeline is scored like a standard 3D detector: greedy
score-ordered matching against ground truth at a per-category IoU
threshold, 11-point interpolated average precision, and per-instance
quality metrics over the matched pairs.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .geometry import Box3D, box_iou_3d, centroid_distance, instance_iou, points_in_box
from .pointcloud import Category, GroundTruthObject, PointCloud
from .segmentation import InstanceMask

# 11-point interpolation grid. arange/10 yields the correctly-rounded
# floats of k/10, so comparisons against recall = tp/n_gt match exact
# rational comparison.
RECALL_POINTS = np.arange(11) / 10.0

# AP thresholds: 0.5 IoU for cars, 0.25 for the small classes.
DEFAULT_AP_THRESHOLDS = {
    Category.CAR: 0.5,
    Category.PEDESTRIAN: 0.25,
    Category.CYCLIST: 0.25,
}


@dataclass(frozen=True)
class DetectionResult:
    """One pipeline output: a scored box plus its instance mask."""

    scene_id: str
    category: Category
    box: Box3D
    score: float
    mask: Optional[InstanceMask] = None

    def __post_init__(self):
        if not isinstance(self.category, Category):
            object.__setattr__(self, "category", Category(self.category))
        if not np.isfinite(self.score):
            raise ValueError("detection score must be finite")


@dataclass(frozen=True)
class ClassMetrics:
    """Per-category summary over matched instances."""

    n_instances: int
    mean_iiou: float
    mean_centroid_error_m: float
    centroid_error_std_m: float
    mean_box_iou: float
    ap_3d: float
    n_matched: int = 0

    def to_dict(self) -> dict:
        return {
            "n_instances": self.n_instances,
            "mean_iiou": self.mean_iiou,
            "mean_centroid_error_m": self.mean_centroid_error_m,
            "centroid_error_std_m": self.centroid_error_std_m,
            "mean_box_iou": self.mean_box_iou,
            "ap_3d": self.ap_3d,
            "n_matched": self.n_matched,
        }


def _sorted_detection_order(dets: Sequence[DetectionResult]) -> list[int]:
    """Descending score; ties broken by scene id then within-scene order.

    The within-scene position keeps results independent of the order in
    which scenes were evaluated.
    """
    within: dict[str, int] = {}
    keys = []
    for i, det in enumerate(dets):
        pos = within.get(det.scene_id, 0)
        within[det.scene_id] = pos + 1
        keys.append((-det.score, det.scene_id, pos, i))
    return [k[3] for k in sorted(keys)]


def match_detections(
    dets: Sequence[DetectionResult],
    gts: dict[str, Sequence[Box3D]],
    iou_threshold: float,
) -> tuple[list[bool], list[Optional[tuple[str, int]]]]:
    """Greedy matching in score order.

    Each detection takes the highest-IoU unmatched ground truth box in
    its scene when that IoU clears the threshold. Returns a TP flag and
    the matched (scene_id, gt index) per detection, both in the internal
    score order produced by _sorted_detection_order.
    """
    if not (0.0 < iou_threshold <= 1.0):
        raise ValueError(f"iou_threshold must be in (0, 1], got {iou_threshold}")
    order = _sorted_detection_order(dets)
    used: dict[str, set[int]] = {sid: set() for sid in gts}
    tp_flags: list[bool] = []
    matches: list[Optional[tuple[str, int]]] = []
    for i in order:
        det = dets[i]
        scene_gts = gts.get(det.scene_id, ())
        best_iou, best_j = 0.0, None
        for j, gt_box in enumerate(scene_gts):
            if j in used.setdefault(det.scene_id, set()):
                continue
            iou = box_iou_3d(det.box, gt_box)
            if iou >= iou_threshold and iou > best_iou:
                best_iou, best_j = iou, j
        if best_j is None:
            tp_flags.append(False)
            matches.append(None)
        else:
            used[det.scene_id].add(best_j)
            tp_flags.append(True)
            matches.append((det.scene_id, best_j))
    return tp_flags, matches


def average_precision(
    dets: Sequence[DetectionResult],
    gts: dict[str, Sequence[Box3D]],
    iou_threshold: float,
) -> float:
    """11-point interpolated AP at one IoU threshold.

    AP is the mean over recall levels {0, 0.1, ..., 1.0} of the maximum
    precision at or beyond each level.
    """
    n_gt = sum(len(boxes) for boxes in gts.values())
    if n_gt == 0:
        return 0.0
    tp_flags, _ = match_detections(dets, gts, iou_threshold)
    if not tp_flags:
        return 0.0
    tp = np.cumsum(np.array(tp_flags, dtype=float))
    fp = np.cumsum(~np.array(tp_flags, dtype=bool))
    recall = tp / n_gt
    precision = tp / (tp + fp)
    ap = 0.0
    for r in RECALL_POINTS:
        mask = recall >= r
        ap += precision[mask].max() if mask.any() else 0.0
    return float(ap / len(RECALL_POINTS))


def evaluate_pipeline(
    detections: Sequence[DetectionResult],
    scenes: dict[str, tuple[PointCloud, Sequence[GroundTruthObject]]],
    thresholds: dict[Category, float] = DEFAULT_AP_THRESHOLDS,
) -> dict[Category, ClassMetrics]:
    """Score detections per category against full ground truth scenes.

    Matched pairs contribute to mean instance IoU (predicted mask versus
    the points inside the matched gt box), centroid error, and box IoU;
    unmatched ground truth still drags AP recall down but stays out of
    the mean-error columns.
    """
    results: dict[Category, ClassMetrics] = {}
    categories = sorted(
        {d.category for d in detections} | {o.category for _, objs in scenes.values() for o in objs},
        key=lambda c: c.value,
    )
    for category in categories:
        dets = [d for d in detections if d.category is category]
        gt_boxes: dict[str, list[Box3D]] = {}
        for scene_id, (_, objs) in scenes.items():
            gt_boxes[scene_id] = [o.box for o in objs if o.category is category]
        threshold = thresholds.get(category, 0.5)

        order = _sorted_detection_order(dets)
        tp_flags, matches = match_detections(dets, gt_boxes, threshold)

        iious, cerrs, bious = [], [], []
        for pos, match in zip(order, matches):
            if match is None:
                continue
            det = dets[pos]
            scene_id, gt_index = match
            gt_box = gt_boxes[scene_id][gt_index]
            cerrs.append(centroid_distance(det.box, gt_box))
            bious.append(box_iou_3d(det.box, gt_box))
            if det.mask is not None:
                cloud, _ = scenes[scene_id]
                gt_points = points_in_box(cloud, gt_box)
                iious.append(instance_iou(det.mask.source_indices, gt_points))

        n_instances = sum(len(b) for b in gt_boxes.values())
        results[category] = ClassMetrics(
            n_instances=n_instances,
            mean_iiou=float(np.mean(iious)) if iious else 0.0,
            mean_centroid_error_m=float(np.mean(cerrs)) if cerrs else 0.0,
            centroid_error_std_m=float(np.std(cerrs)) if cerrs else 0.0,
            mean_box_iou=float(np.mean(bious)) if bious else 0.0,
            ap_3d=average_precision(dets, gt_boxes, threshold),
            n_matched=sum(tp_flags),
        )
    return results


def metrics_to_json(metrics: dict[Category, ClassMetrics]) -> str:
    return json.dumps(
        {c.value: m.to_dict() for c, m in sorted(metrics.items(), key=lambda kv: kv[0].value)},
        indent=2,
        sort_keys=True,
    )


def write_metrics_csv(path, metrics: dict[Category, ClassMetrics]) -> None:
    fields = [
        "category",
        "n_instances",
        "mean_iiou",
        "mean_centroid_error_m",
        "centroid_error_std_m",
        "mean_box_iou",
        "ap_3d",
        "n_matched",
    ]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for category, m in sorted(metrics.items(), key=lambda kv: kv[0].value):
            writer.writerow({"category": category.value, **m.to_dict()})


# ---------------------------------------------------------------------------
# Annotation timing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SceneTiming:
    """Wall-clock annotation time of one scene."""

    scene_id: str
    elapsed_s: float
    n_objects: int


@dataclass(frozen=True)
class TimingReport:
    # (object count, mean seconds per object, scene count) per bucket
    buckets: tuple[tuple[int, float, int], ...]
    overall_mean_s_per_object: float
    total_seconds: float
    total_objects: int


def timing_report(
    timings: Sequence[SceneTiming],
    csv_path=None,
    figure_path=None,
) -> TimingReport:
    """Aggregate seconds-per-object by scene object count.

    Scenes with zero objects are excluded with a warning. The overall
    mean is total seconds over total objects. Optionally writes a CSV
    table and an SVG scatter/line figure.
    """
    usable = []
    for t in timings:
        if t.n_objects <= 0:
            warnings.warn(f"scene {t.scene_id!r} has no objects; excluded from timing report")
            continue
        usable.append(t)

    per_bucket: dict[int, list[float]] = {}
    for t in usable:
        per_bucket.setdefault(t.n_objects, []).append(t.elapsed_s / t.n_objects)
    buckets = tuple(
        (n, float(np.mean(values)), len(values)) for n, values in sorted(per_bucket.items())
    )
    total_seconds = float(sum(t.elapsed_s for t in usable))
    total_objects = int(sum(t.n_objects for t in usable))
    overall = total_seconds / total_objects if total_objects else 0.0
    report = TimingReport(
        buckets=buckets,
        overall_mean_s_per_object=overall,
        total_seconds=total_seconds,
        total_objects=total_objects,
    )
    if csv_path is not None:
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["n_objects", "mean_s_per_object", "n_scenes"])
            for n, mean, count in report.buckets:
                writer.writerow([n, f"{mean:.6f}", count])
            writer.writerow(["overall", f"{overall:.6f}", len(usable)])
    if figure_path is not None:
        _render_timing_figure(report, figure_path)
    return report


def _render_timing_figure(report: TimingReport, path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    if report.buckets:
        xs = [b[0] for b in report.buckets]
        ys = [b[1] for b in report.buckets]
        ax.plot(xs, ys, "o-", label="mean per bucket")
        ax.axhline(
            report.overall_mean_s_per_object,
            linestyle="--",
            color="gray",
            label=f"overall {report.overall_mean_s_per_object:.2f} s/object",
        )
    ax.set_xlabel("objects in scene")
    ax.set_ylabel("annotation time per object [s]")
    ax.legend()
    fig.tight_layout()
    fig.savefig(Path(path), format="svg")
    plt.close(fig)
