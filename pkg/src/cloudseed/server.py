"""HTTP service driving annotation sessions for the browser tool.

A thin adapter over the workflow module: all pass/fail logic, batching,
and persistence rules live there; this layer adds transport, opaque
session tokens, and per-session locking. Scene payloads travel as the
CSPC binary container; everything else is JSON.
"""

from __future__ import annotations

import json
import secrets
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from fastapi import FastAPI, HTTPException, Request, Response

from .config import ServeConfig
from .errors import PoolExhaustedError
from .pointcloud import Category, GroundTruthObject, load_scene
from .segmentation import Click
from .workflow import (
    AnnotatorSession,
    Batch,
    SessionState,
    advance_training,
    assemble_batch,
    new_session,
    process_batch,
    restart_training,
    score_scene,
    session_to_json,
    training_review,
)


@dataclass
class ScenePool:
    """Scenes on disk plus their ground truth, keyed by file stem."""

    directory: Path
    ids: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.ids = sorted(p.stem for p in self.directory.glob("*.cspc"))

    def payload(self, scene_id: str) -> bytes:
        return (self.directory / f"{scene_id}.cspc").read_bytes()

    def point_count(self, scene_id: str) -> int:
        import struct

        with open(self.directory / f"{scene_id}.cspc", "rb") as fh:
            header = fh.read(11)
        return struct.unpack("<I", header[7:11])[0]

    def ground_truth(self, scene_id: str) -> list[GroundTruthObject]:
        _, objects = load_scene(self.directory / f"{scene_id}.cspc")
        return objects

    def __contains__(self, scene_id: str) -> bool:
        return scene_id in self.ids


@dataclass
class SessionRuntime:
    """Mutable per-token state; guarded by its lock."""

    session: AnnotatorSession
    lock: threading.Lock = field(default_factory=threading.Lock)
    batch: Optional[Batch] = None
    batches_done: int = 0
    submissions: dict = field(default_factory=dict)
    pending_scene: Optional[str] = None
    annotation_cursor: int = 0  # rotation through the annotation pool


class AnnotationService:
    def __init__(self, config: ServeConfig):
        self.config = config
        self.training_pool = ScenePool(config.training_dir)
        self.golden_pool = ScenePool(config.golden_dir)
        self.annotation_pool = ScenePool(config.annotation_dir)
        if not self.training_pool.ids:
            raise PoolExhaustedError(f"no training scenes in {config.training_dir}")
        if not self.golden_pool.ids:
            raise PoolExhaustedError(f"no golden scenes in {config.golden_dir}")
        config.out_dir.mkdir(parents=True, exist_ok=True)
        self.db_path = config.out_dir / "clicks.jsonl"
        self.timings_path = config.out_dir / "timings.jsonl"
        self.sessions: dict[str, SessionRuntime] = {}
        self.registry_lock = threading.Lock()

    # -- session plumbing ---------------------------------------------------

    def create_session(self, annotator_id: str, category: Category) -> tuple[str, SessionRuntime]:
        token = secrets.token_hex(16)
        with self.registry_lock:
            seed = self.config.seed + len(self.sessions)
            runtime = SessionRuntime(session=new_session(annotator_id, category, rng_seed=seed))
            self.sessions[token] = runtime
        return token, runtime

    def runtime_for(self, token: str) -> SessionRuntime:
        runtime = self.sessions.get(token)
        if runtime is None:
            raise HTTPException(status_code=401, detail="invalid session token")
        return runtime

    # -- scene scheduling ---------------------------------------------------

    def _training_scene_id(self, session: AnnotatorSession) -> str:
        pool = self.training_pool.ids
        offset = session.training_attempts * self.config.qa.training_scenes
        return pool[(offset + session.training_index) % len(pool)]

    def _ensure_batch(self, runtime: SessionRuntime) -> Batch:
        if runtime.batch is None:
            start = runtime.annotation_cursor
            pool = self.annotation_pool.ids
            if len(pool) < self.config.qa.batch_size:
                raise PoolExhaustedError("annotation pool smaller than one batch")
            rotation = [pool[(start + i) % len(pool)] for i in range(len(pool))]
            seed = int(
                np.random.SeedSequence(
                    (self.config.seed, runtime.session.rng_seed, runtime.batches_done)
                ).generate_state(1)[0]
            )
            runtime.batch = assemble_batch(
                rotation,
                self.golden_pool.ids,
                self.config.qa,
                seed=seed,
                category=runtime.session.category,
            )
            runtime.submissions = {}
        return runtime.batch

    def next_scene(self, runtime: SessionRuntime) -> dict:
        if runtime.session.state is SessionState.FAILED_REQUALIFY:
            # a failed golden sends the annotator straight back to training
            runtime.session = restart_training(runtime.session)
            runtime.batch = None
            runtime.submissions = {}
        session = runtime.session
        if session.state is SessionState.IN_TRAINING:
            scene_id = self._training_scene_id(session)
            phase = "training"
        else:
            batch = self._ensure_batch(runtime)
            done = len(runtime.submissions)
            scene_id = batch.scene_ids[done]
            phase = "annotation"
        runtime.pending_scene = scene_id
        pool = self.training_pool if phase == "training" else self.annotation_pool
        count = (pool if scene_id in pool else self.golden_pool).point_count(scene_id)
        return {
            "scene_id": scene_id,
            "phase": phase,
            "category": session.category.value,
            "point_count": count,
            "payload_url": f"/scene/{scene_id}/payload",
        }

    def scene_payload(self, scene_id: str) -> bytes:
        for pool in (self.training_pool, self.annotation_pool, self.golden_pool):
            if scene_id in pool:
                return pool.payload(scene_id)
        raise HTTPException(status_code=404, detail=f"unknown scene {scene_id}")

    # -- submissions ----------------------------------------------------------

    def _log_timing(self, scene_id: str, elapsed_s: float, n_objects: int) -> None:
        record = {"scene_id": scene_id, "elapsed_s": elapsed_s, "n_objects": n_objects}
        with open(self.timings_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")

    def submit_scene(self, runtime: SessionRuntime, scene_id: str, payload: dict) -> dict:
        session = runtime.session
        if runtime.pending_scene != scene_id:
            raise HTTPException(
                status_code=409,
                detail=f"expected submission for {runtime.pending_scene!r}, got {scene_id!r}",
            )
        clicks = [
            Click(
                scene_id=scene_id,
                category=session.category,
                position=np.array([c["x"], c["y"], c["z"]], dtype=float),
                timestamp_ms=float(c.get("timestamp_ms", 0.0)),
            )
            for c in payload.get("clicks", [])
        ]
        elapsed = float(payload["elapsed_s"])
        runtime.pending_scene = None

        if session.state is SessionState.IN_TRAINING:
            gt = self.training_pool.ground_truth(scene_id)
            result = score_scene(
                clicks, gt, elapsed, self.config.qa, category=session.category, scene_id=scene_id
            )
            runtime.session = advance_training(session, result, self.config.qa)
            self._log_timing(scene_id, elapsed, sum(1 for o in gt if o.category is session.category))
            return {
                "phase": "training",
                "scene_passed": result.passed,
                "recall": result.recall,
                "precision": result.precision,
                "elapsed": result.elapsed,
                "time_budget": result.time_budget,
                "state": runtime.session.state.value,
                "scenes_completed": len(runtime.session.training_results),
            }

        if session.state is SessionState.ANNOTATING:
            batch = self._ensure_batch(runtime)
            if scene_id not in batch.scene_ids:
                raise HTTPException(status_code=409, detail=f"{scene_id} is not in the batch")
            runtime.submissions[scene_id] = (clicks, elapsed)
            self._log_timing(scene_id, elapsed, len(clicks))
            if len(runtime.submissions) < len(batch.scene_ids):
                return {
                    "phase": "annotation",
                    "state": session.state.value,
                    "batch_progress": len(runtime.submissions),
                    "batch_size": len(batch.scene_ids),
                }
            golden_gt = self.golden_pool.ground_truth(batch.golden_scene_id)
            outcome = process_batch(
                session, batch, runtime.submissions, golden_gt, self.config.qa, self.db_path
            )
            runtime.session = outcome.session
            runtime.batch = None
            runtime.submissions = {}
            runtime.batches_done += 1
            if outcome.committed:
                runtime.annotation_cursor = (
                    runtime.annotation_cursor + self.config.qa.batch_size
                ) % len(self.annotation_pool.ids)
            return {
                "phase": "annotation",
                "batch_committed": outcome.committed,
                "records_appended": outcome.records_appended,
                "state": runtime.session.state.value,
            }

        raise HTTPException(status_code=409, detail="session cannot accept submissions")


def create_app(config: ServeConfig) -> FastAPI:
    service = AnnotationService(config)
    app = FastAPI(title="cloudseed annotation service")
    app.state.service = service

    def token_from(request: Request) -> str:
        token = request.headers.get("x-session-token") or request.query_params.get("token")
        if not token:
            raise HTTPException(status_code=401, detail="missing session token")
        return token

    @app.post("/session")
    async def create_session(payload: dict):
        annotator_id = payload.get("annotator_id", "anonymous")
        category = Category(payload.get("category", config.category.value))
        token, runtime = service.create_session(annotator_id, category)
        return {
            "token": token,
            "state": runtime.session.state.value,
            "category": category.value,
            "training_scenes": config.qa.training_scenes,
            "batch_size": config.qa.batch_size,
        }

    @app.get("/scene/next")
    async def scene_next(request: Request):
        runtime = service.runtime_for(token_from(request))
        with runtime.lock:
            return service.next_scene(runtime)

    @app.get("/scene/{scene_id}/payload")
    async def scene_payload(scene_id: str):
        payload = service.scene_payload(scene_id)
        return Response(content=payload, media_type="application/octet-stream")

    @app.post("/scene/{scene_id}/clicks")
    async def scene_clicks(scene_id: str, payload: dict, request: Request):
        runtime = service.runtime_for(token_from(request))
        with runtime.lock:
            return service.submit_scene(runtime, scene_id, payload)

    @app.get("/review")
    async def review(request: Request):
        runtime = service.runtime_for(token_from(request))
        with runtime.lock:
            return training_review(runtime.session)

    @app.get("/session/state")
    async def session_state(request: Request):
        runtime = service.runtime_for(token_from(request))
        with runtime.lock:
            return json.loads(session_to_json(runtime.session))

    return app
