"""Annotator lifecycle: training sequences, QA scoring, batches, click DB.

Annotators first pass a training sequence of scenes with known ground
truth, gated on recall, precision, and a per-scene time budget. Passing
unlocks annotation in batches of 20 scenes plus one hidden golden
question; a failed golden discards the whole batch and sends the
annotator back to training. Committed clicks land in an append-only
JSON-lines database.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import (
    ClickDatabaseError,
    IncompleteBatchError,
    PoolExhaustedError,
    StateError,
)
from .geometry import points_in_box
from .pointcloud import Category, GroundTruthObject
from .segmentation import Click


@dataclass(frozen=True)
class QAConfig:
    """Quality gates and timing constants for annotator QA."""

    t_object: float = 7.0  # seconds allocated per object click
    t_scene: float = 7.0  # seconds allocated to scan the scene
    min_recall: float = 0.8
    min_precision: float = 0.6
    training_scenes: int = 5
    batch_size: int = 20

    def __post_init__(self):
        if self.t_object <= 0 or self.t_scene <= 0:
            raise ValueError("time constants must be positive")
        for name in ("min_recall", "min_precision"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must be in [0, 1]")


def compute_time_budget(config: QAConfig, n_objects: int) -> float:
    """Max allowed seconds for a scene with n_objects instances."""
    if n_objects < 0:
        raise ValueError("object count must be >= 0")
    return n_objects * config.t_object + config.t_scene


@dataclass(frozen=True)
class SceneResult:
    """Score of one annotated scene, including per-click verdicts."""

    scene_id: str
    clicks: tuple[Click, ...]
    elapsed: float
    recall: float
    precision: float
    passed: bool
    click_verdicts: tuple[bool, ...] = ()  # True when the click hit a gt box
    time_budget: float = 0.0


def score_scene(
    clicks: Sequence[Click],
    gt_objects: Sequence[GroundTruthObject],
    elapsed: float,
    config: QAConfig,
    category: Optional[Category] = None,
    scene_id: str = "",
) -> SceneResult:
    """Score clicks against ground truth boxes of the annotated category.

    Recall counts boxes hit by at least one click (one click inside two
    overlapping boxes credits both); precision counts clicks inside any
    box, each click once. A scene with no clicks has precision 1 by
    convention.
    """
    if category is None and clicks:
        category = clicks[0].category
    gt_boxes = [o.box for o in gt_objects if category is None or o.category is category]

    hits_per_box = [False] * len(gt_boxes)
    verdicts = []
    for click in clicks:
        inside_any = False
        if click.category is category or category is None:
            for i, box in enumerate(gt_boxes):
                if points_in_box(click.position[None, :], box).size:
                    hits_per_box[i] = True
                    inside_any = True
        verdicts.append(inside_any)

    recall = (sum(hits_per_box) / len(gt_boxes)) if gt_boxes else 1.0
    precision = (sum(verdicts) / len(clicks)) if clicks else 1.0
    budget = compute_time_budget(config, len(gt_boxes))
    passed = recall >= config.min_recall and precision >= config.min_precision and elapsed <= budget
    if not scene_id and clicks:
        scene_id = clicks[0].scene_id
    return SceneResult(
        scene_id=scene_id,
        clicks=tuple(clicks),
        elapsed=float(elapsed),
        recall=float(recall),
        precision=float(precision),
        passed=bool(passed),
        click_verdicts=tuple(verdicts),
        time_budget=float(budget),
    )


class SessionState(str, Enum):
    IN_TRAINING = "in_training"
    ANNOTATING = "annotating"
    FAILED_REQUALIFY = "failed_requalify"


@dataclass(frozen=True)
class AnnotatorSession:
    """Immutable session snapshot; operations return updated copies."""

    annotator_id: str
    category: Category
    state: SessionState = SessionState.IN_TRAINING
    training_index: int = 0  # next scene within the current training sequence
    training_results: tuple[SceneResult, ...] = ()
    training_attempts: int = 0  # completed training sequences so far
    batch_progress: int = 0  # scenes submitted in the current batch
    history: tuple[SceneResult, ...] = ()
    rng_seed: int = 0


def new_session(annotator_id: str, category: Category, rng_seed: int = 0) -> AnnotatorSession:
    return AnnotatorSession(annotator_id=annotator_id, category=Category(category), rng_seed=rng_seed)


def restart_training(session: AnnotatorSession) -> AnnotatorSession:
    """Send a requalifying annotator back into a fresh training sequence."""
    if session.state is not SessionState.FAILED_REQUALIFY:
        raise StateError(f"cannot restart training from state {session.state.value}")
    return replace(
        session,
        state=SessionState.IN_TRAINING,
        training_index=0,
        training_results=(),
        batch_progress=0,
    )


def advance_training(
    session: AnnotatorSession, scene_result: SceneResult, config: QAConfig = QAConfig()
) -> AnnotatorSession:
    """Record one training-scene result and move the state machine.

    After the final scene of a sequence the annotator either starts
    annotating (all scenes passed) or receives a fresh training sequence.
    There is no lockout: training repeats as often as needed.
    """
    if session.state is not SessionState.IN_TRAINING:
        raise StateError(f"advance_training called in state {session.state.value}")
    results = session.training_results + (scene_result,)
    session = replace(
        session,
        training_results=results,
        training_index=session.training_index + 1,
        history=session.history + (scene_result,),
    )
    if len(results) < config.training_scenes:
        return session
    if all(r.passed for r in results):
        return replace(
            session,
            state=SessionState.ANNOTATING,
            training_index=0,
            training_attempts=session.training_attempts + 1,
            batch_progress=0,
        )
    return replace(
        session,
        training_index=0,
        training_results=(),
        training_attempts=session.training_attempts + 1,
    )


def training_review(session: AnnotatorSession) -> dict:
    """Review payload for the UI: per-click verdicts and per-scene metrics."""
    scenes = []
    for result in session.training_results:
        scenes.append(
            {
                "scene_id": result.scene_id,
                "recall": result.recall,
                "precision": result.precision,
                "elapsed": result.elapsed,
                "time_budget": result.time_budget,
                "passed": result.passed,
                "clicks": [
                    {
                        "x": float(c.position[0]),
                        "y": float(c.position[1]),
                        "z": float(c.position[2]),
                        "inside": bool(v),
                    }
                    for c, v in zip(result.clicks, result.click_verdicts)
                ],
            }
        )
    return {
        "scenes": scenes,
        "scenes_completed": len(session.training_results),
        "state": session.state.value,
    }


@dataclass(frozen=True)
class Batch:
    """batch_size annotation scenes plus one hidden golden scene."""

    scene_ids: tuple[str, ...]
    golden_position: int
    batch_id: str
    category: Category

    def __post_init__(self):
        if not (0 <= self.golden_position < len(self.scene_ids)):
            raise ValueError("golden_position outside batch")

    @property
    def golden_scene_id(self) -> str:
        return self.scene_ids[self.golden_position]

    def annotator_view(self) -> list[str]:
        """Scene ids as shown to the annotator; nothing marks the golden."""
        return list(self.scene_ids)


def assemble_batch(
    scene_pool: Sequence[str],
    golden_pool: Sequence[str],
    config: QAConfig,
    seed: int,
    category: Category = Category.CAR,
) -> Batch:
    """Draw a batch from the pool and hide one golden scene inside it.

    Takes the first batch_size pool scenes (callers rotate their pools),
    picks the golden scene and its position uniformly from the seed.
    """
    if len(scene_pool) < config.batch_size:
        raise PoolExhaustedError(
            f"scene pool has {len(scene_pool)} scenes, need {config.batch_size}"
        )
    if not golden_pool:
        raise PoolExhaustedError("golden pool is empty")
    selection = list(scene_pool[: config.batch_size])
    rng = np.random.default_rng(seed)
    golden = golden_pool[int(rng.integers(len(golden_pool)))]
    if golden in selection:
        raise ValueError(f"golden scene {golden!r} overlaps the batch selection")
    position = int(rng.integers(config.batch_size + 1))
    ids = selection[:position] + [golden] + selection[position:]
    return Batch(
        scene_ids=tuple(ids),
        golden_position=position,
        batch_id=f"batch-{seed:08d}",
        category=Category(category),
    )


@dataclass(frozen=True)
class BatchOutcome:
    committed: bool
    golden_result: SceneResult
    session: AnnotatorSession
    records_appended: int = 0


def process_batch(
    session: AnnotatorSession,
    batch: Batch,
    submissions: dict[str, tuple[Sequence[Click], float]],
    golden_gt: Sequence[GroundTruthObject],
    config: QAConfig,
    db_path,
) -> BatchOutcome:
    """Judge a finished batch by its golden scene only.

    A passing golden commits every scene's clicks to the database and the
    session rolls straight into the next batch; a failing golden discards
    everything and forces requalification.
    """
    missing = [sid for sid in batch.scene_ids if sid not in submissions]
    if missing:
        raise IncompleteBatchError(f"batch missing submissions for scenes {missing}")
    golden_clicks, golden_elapsed = submissions[batch.golden_scene_id]
    golden_result = score_scene(
        golden_clicks,
        golden_gt,
        golden_elapsed,
        config,
        category=batch.category,
        scene_id=batch.golden_scene_id,
    )
    if not golden_result.passed:
        return BatchOutcome(
            committed=False,
            golden_result=golden_result,
            session=replace(session, state=SessionState.FAILED_REQUALIFY, batch_progress=0),
        )
    records = []
    for scene_id in batch.scene_ids:
        clicks, _ = submissions[scene_id]
        for click in clicks:
            records.append(
                ClickRecord(
                    annotator_id=session.annotator_id,
                    scene_id=scene_id,
                    category=click.category,
                    x=float(click.position[0]),
                    y=float(click.position[1]),
                    z=float(click.position[2]),
                    timestamp_ms=float(click.timestamp_ms),
                    batch_id=batch.batch_id,
                )
            )
    click_db_append(db_path, records)
    return BatchOutcome(
        committed=True,
        golden_result=golden_result,
        session=replace(session, batch_progress=0, history=session.history + (golden_result,)),
        records_appended=len(records),
    )


# ---------------------------------------------------------------------------
# Click database: append-only JSON lines
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ClickRecord:
    annotator_id: str
    scene_id: str
    category: Category
    x: float
    y: float
    z: float
    timestamp_ms: float
    batch_id: str
    tombstone: bool = False  # deletions are modeled as tombstone records

    def __post_init__(self):
        if not isinstance(self.category, Category):
            object.__setattr__(self, "category", Category(self.category))

    def to_json(self) -> str:
        record = {
            "annotator_id": self.annotator_id,
            "scene_id": self.scene_id,
            "category": self.category.value,
            "x": self.x,
            "y": self.y,
            "z": self.z,
            "timestamp_ms": self.timestamp_ms,
            "batch_id": self.batch_id,
        }
        if self.tombstone:
            record["tombstone"] = True
        return json.dumps(record, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, payload: str) -> "ClickRecord":
        data = json.loads(payload)
        return cls(
            annotator_id=data["annotator_id"],
            scene_id=data["scene_id"],
            category=Category(data["category"]),
            x=float(data["x"]),
            y=float(data["y"]),
            z=float(data["z"]),
            timestamp_ms=float(data["timestamp_ms"]),
            batch_id=data["batch_id"],
            tombstone=bool(data.get("tombstone", False)),
        )

    def click(self) -> Click:
        return Click(
            scene_id=self.scene_id,
            category=self.category,
            position=np.array([self.x, self.y, self.z]),
            timestamp_ms=self.timestamp_ms,
        )


def click_db_append(path, records: Sequence[ClickRecord]) -> None:
    """Append records, one JSON object per line, one atomic write per line.

    The file is opened in append mode so concurrent writers from separate
    sessions interleave at line granularity, never inside a line.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a", encoding="utf-8") as fh:
        for record in records:
            fh.write(record.to_json() + "\n")
            fh.flush()


def click_db_load(path) -> list[ClickRecord]:
    """Read every record back; a corrupt line reports its line number."""
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(ClickRecord.from_json(line))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise ClickDatabaseError(f"click database line {lineno}: {exc}") from exc
    return records


def effective_clicks(records: Sequence[ClickRecord]) -> list[ClickRecord]:
    """Drop records voided by a later tombstone with matching identity."""
    tombstoned = {
        (r.annotator_id, r.scene_id, r.batch_id, r.x, r.y, r.z)
        for r in records
        if r.tombstone
    }
    return [
        r
        for r in records
        if not r.tombstone
        and (r.annotator_id, r.scene_id, r.batch_id, r.x, r.y, r.z) not in tombstoned
    ]


# ---------------------------------------------------------------------------
# Session snapshots
# ---------------------------------------------------------------------------


def session_to_json(session: AnnotatorSession) -> str:
    def result_dict(r: SceneResult) -> dict:
        return {
            "scene_id": r.scene_id,
            "elapsed": r.elapsed,
            "recall": r.recall,
            "precision": r.precision,
            "passed": r.passed,
            "time_budget": r.time_budget,
            "click_verdicts": list(r.click_verdicts),
            "clicks": [
                {
                    "scene_id": c.scene_id,
                    "category": c.category.value,
                    "position": [float(v) for v in c.position],
                    "timestamp_ms": c.timestamp_ms,
                }
                for c in r.clicks
            ],
        }

    return json.dumps(
        {
            "annotator_id": session.annotator_id,
            "category": session.category.value,
            "state": session.state.value,
            "training_index": session.training_index,
            "training_results": [result_dict(r) for r in session.training_results],
            "training_attempts": session.training_attempts,
            "batch_progress": session.batch_progress,
            "history": [result_dict(r) for r in session.history],
            "rng_seed": session.rng_seed,
        },
        sort_keys=True,
    )


def session_from_json(payload: str) -> AnnotatorSession:
    data = json.loads(payload)

    def result_from(d: dict) -> SceneResult:
        clicks = tuple(
            Click(
                scene_id=c["scene_id"],
                category=Category(c["category"]),
                position=np.array(c["position"]),
                timestamp_ms=c["timestamp_ms"],
            )
            for c in d["clicks"]
        )
        return SceneResult(
            scene_id=d["scene_id"],
            clicks=clicks,
            elapsed=d["elapsed"],
            recall=d["recall"],
            precision=d["precision"],
            passed=d["passed"],
            click_verdicts=tuple(bool(v) for v in d["click_verdicts"]),
            time_budget=d["time_budget"],
        )

    return AnnotatorSession(
        annotator_id=data["annotator_id"],
        category=Category(data["category"]),
        state=SessionState(data["state"]),
        training_index=int(data["training_index"]),
        training_results=tuple(result_from(r) for r in data["training_results"]),
        training_attempts=int(data["training_attempts"]),
        batch_progress=int(data["batch_progress"]),
        history=tuple(result_from(r) for r in data["history"]),
        rng_seed=int(data["rng_seed"]),
    )
