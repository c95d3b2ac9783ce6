import json
import threading

import numpy as np
import pytest

from cloudseed.errors import (
    ClickDatabaseError,
    IncompleteBatchError,
    PoolExhaustedError,
    StateError,
)
from cloudseed.geometry import Box3D
from cloudseed.pointcloud import Category, GroundTruthObject
from cloudseed.segmentation import Click
from cloudseed.workflow import (
    Batch,
    ClickRecord,
    QAConfig,
    SessionState,
    advance_training,
    assemble_batch,
    click_db_append,
    click_db_load,
    compute_time_budget,
    effective_clicks,
    new_session,
    process_batch,
    restart_training,
    score_scene,
    session_from_json,
    session_to_json,
    training_review,
)

CONFIG = QAConfig()


def gt_box_at(x, z, category=Category.CAR):
    return GroundTruthObject(category=category, box=Box3D(x, 0.75, z, 1.5, 1.6, 3.9, 0.0))


def click_at(x, z, scene="scene-0", category=Category.CAR, y=0.75, t=0.0):
    return Click(scene_id=scene, category=category, position=np.array([x, y, z]), timestamp_ms=t)


class TestTimeBudget:
    @pytest.mark.parametrize("n,expected", [(0, 7.0), (5, 42.0), (10, 77.0)])
    def test_formula(self, n, expected):
        assert compute_time_budget(CONFIG, n) == expected

    def test_linear_in_n(self):
        values = [compute_time_budget(CONFIG, n) for n in range(20)]
        diffs = {round(b - a, 9) for a, b in zip(values, values[1:])}
        assert diffs == {CONFIG.t_object}
        assert values[0] == CONFIG.t_scene


class TestScoreScene:
    def test_three_of_four_boxes_hit(self):
        gt = [gt_box_at(0, 10), gt_box_at(10, 10), gt_box_at(20, 10), gt_box_at(30, 10)]
        clicks = [click_at(0, 10), click_at(10, 10), click_at(20, 10), click_at(50, 50)]
        result = score_scene(clicks, gt, elapsed=30.0, config=CONFIG)
        assert result.recall == 0.75
        assert result.precision == 0.75
        assert not result.passed  # recall below 0.8

    def test_all_hit_within_budget(self):
        gt = [gt_box_at(10 * i, 10) for i in range(5)]
        clicks = [click_at(10 * i, 10) for i in range(5)]
        result = score_scene(clicks, gt, elapsed=41.0, config=CONFIG)
        assert result.recall == 1.0 and result.precision == 1.0
        assert result.passed

    def test_time_budget_boundary(self):
        gt = [gt_box_at(10 * i, 10) for i in range(5)]
        clicks = [click_at(10 * i, 10) for i in range(5)]
        assert score_scene(clicks, gt, 42.0, CONFIG).passed  # exactly T_max
        assert not score_scene(clicks, gt, 42.001, CONFIG).passed

    def test_duplicate_clicks_dedup_for_recall(self):
        gt = [gt_box_at(0, 10), gt_box_at(10, 10)]
        clicks = [click_at(0.2, 10), click_at(-0.2, 10)]
        result = score_scene(clicks, gt, 5.0, CONFIG)
        assert result.recall == 0.5
        assert result.precision == 1.0

    def test_empty_clicks_precision_convention(self):
        gt = [gt_box_at(0, 10)]
        result = score_scene([], gt, 5.0, CONFIG, category=Category.CAR)
        assert result.precision == 1.0
        assert result.recall == 0.0

    def test_order_independent(self):
        gt = [gt_box_at(0, 10), gt_box_at(12, 10)]
        clicks = [click_at(0, 10), click_at(12, 10), click_at(40, 40)]
        a = score_scene(clicks, gt, 9.0, CONFIG)
        b = score_scene(list(reversed(clicks)), gt, 9.0, CONFIG)
        assert (a.recall, a.precision) == (b.recall, b.precision)

    def test_click_in_overlapping_boxes_counts_once_for_precision(self):
        gt = [gt_box_at(0, 10), gt_box_at(0.5, 10)]  # overlapping
        clicks = [click_at(0.25, 10)]
        result = score_scene(clicks, gt, 5.0, CONFIG)
        assert result.recall == 1.0  # both boxes credited
        assert result.precision == 1.0

    def test_wrong_category_click_misses(self):
        gt = [gt_box_at(0, 10)]
        clicks = [click_at(0, 10, category=Category.PEDESTRIAN)]
        result = score_scene(clicks, gt, 5.0, CONFIG, category=Category.CAR)
        assert result.recall == 0.0
        assert result.precision == 0.0


def passing_result(scene_id="t"):
    gt = [gt_box_at(0, 10)]
    return score_scene([click_at(0, 10, scene=scene_id)], gt, 5.0, CONFIG, scene_id=scene_id)


def failing_result(scene_id="t"):
    gt = [gt_box_at(0, 10)]
    return score_scene([click_at(90, 90, scene=scene_id)], gt, 5.0, CONFIG, scene_id=scene_id)


class TestTrainingStateMachine:
    def test_five_passes_unlock_annotation(self):
        session = new_session("ann-1", Category.CAR)
        for i in range(5):
            session = advance_training(session, passing_result(f"t{i}"), CONFIG)
        assert session.state is SessionState.ANNOTATING

    def test_single_fail_triggers_new_sequence(self):
        session = new_session("ann-2", Category.CAR)
        results = [passing_result(), passing_result(), failing_result(), passing_result(), passing_result()]
        for r in results:
            session = advance_training(session, r, CONFIG)
        assert session.state is SessionState.IN_TRAINING
        assert session.training_index == 0
        assert session.training_results == ()
        assert session.training_attempts == 1

    def test_no_lockout_after_repeated_failures(self):
        session = new_session("ann-3", Category.CAR)
        for _ in range(4):  # four failed sequences
            for _ in range(5):
                session = advance_training(session, failing_result(), CONFIG)
            assert session.state is SessionState.IN_TRAINING
        for _ in range(5):
            session = advance_training(session, passing_result(), CONFIG)
        assert session.state is SessionState.ANNOTATING

    def test_wrong_state_rejected(self):
        session = new_session("ann-4", Category.CAR)
        for _ in range(5):
            session = advance_training(session, passing_result(), CONFIG)
        with pytest.raises(StateError):
            advance_training(session, passing_result(), CONFIG)

    def test_review_payload_shape(self):
        session = new_session("ann-5", Category.CAR)
        session = advance_training(session, passing_result("t0"), CONFIG)
        payload = training_review(session)
        assert payload["scenes_completed"] == 1
        scene = payload["scenes"][0]
        assert scene["passed"] is True
        assert scene["clicks"][0]["inside"] is True
        assert {"recall", "precision", "elapsed", "time_budget"} <= set(scene)


class TestAssembleBatch:
    POOL = [f"scene-{i:03d}" for i in range(40)]
    GOLDEN = [f"golden-{i}" for i in range(5)]

    def test_deterministic(self):
        a = assemble_batch(self.POOL, self.GOLDEN, CONFIG, seed=9)
        b = assemble_batch(self.POOL, self.GOLDEN, CONFIG, seed=9)
        assert a.scene_ids == b.scene_ids
        assert a.golden_position == b.golden_position

    def test_golden_position_in_range(self):
        for seed in range(50):
            batch = assemble_batch(self.POOL, self.GOLDEN, CONFIG, seed=seed)
            assert 0 <= batch.golden_position <= CONFIG.batch_size
            assert len(batch.scene_ids) == CONFIG.batch_size + 1
            assert batch.golden_scene_id.startswith("golden-")

    def test_position_distribution_uniform(self):
        counts = np.zeros(CONFIG.batch_size + 1)
        n = 10_000
        for seed in range(n):
            counts[assemble_batch(self.POOL, self.GOLDEN, CONFIG, seed).golden_position] += 1
        expected = n / (CONFIG.batch_size + 1)
        sigma = np.sqrt(n * (1 / 21) * (20 / 21))
        assert np.all(np.abs(counts - expected) <= 3 * sigma)

    def test_pool_exhausted(self):
        with pytest.raises(PoolExhaustedError):
            assemble_batch(["only-one"], self.GOLDEN, CONFIG, seed=0)
        with pytest.raises(PoolExhaustedError):
            assemble_batch(self.POOL, [], CONFIG, seed=0)

    def test_annotator_view_hides_golden(self):
        batch = assemble_batch(self.POOL, self.GOLDEN, CONFIG, seed=3)
        view = batch.annotator_view()
        assert len(view) == 21
        # view is plain ids; golden is only recoverable via the hidden field
        assert view[batch.golden_position] == batch.golden_scene_id


def annotating_session():
    session = new_session("ann-9", Category.CAR, rng_seed=5)
    for i in range(5):
        session = advance_training(session, passing_result(f"t{i}"), CONFIG)
    return session


def make_batch_and_submissions(golden_hits: bool, db_suffix=""):
    config = QAConfig(batch_size=3)
    pool = [f"s{i}" for i in range(10)]
    batch = assemble_batch(pool, ["gold-1"], config, seed=7)
    golden_gt = [gt_box_at(0, 10)]
    submissions = {}
    for sid in batch.scene_ids:
        if sid == batch.golden_scene_id:
            pos = (0, 10) if golden_hits else (70, 70)
            submissions[sid] = ([click_at(*pos, scene=sid)], 5.0)
        else:
            submissions[sid] = ([click_at(1, 10, scene=sid), click_at(2, 11, scene=sid)], 8.0)
    return config, batch, submissions, golden_gt


class TestProcessBatch:
    def test_commit_grows_database(self, tmp_path):
        db = tmp_path / "clicks.jsonl"
        config, batch, submissions, golden_gt = make_batch_and_submissions(golden_hits=True)
        session = annotating_session()
        outcome = process_batch(session, batch, submissions, golden_gt, config, db)
        assert outcome.committed
        total_clicks = sum(len(c) for c, _ in submissions.values())
        records = click_db_load(db)
        assert len(records) == total_clicks == outcome.records_appended
        assert outcome.session.state is SessionState.ANNOTATING

    def test_discard_leaves_database_untouched(self, tmp_path):
        db = tmp_path / "clicks.jsonl"
        config, batch, submissions, golden_gt = make_batch_and_submissions(golden_hits=False)
        session = annotating_session()
        outcome = process_batch(session, batch, submissions, golden_gt, config, db)
        assert not outcome.committed
        assert outcome.session.state is SessionState.FAILED_REQUALIFY
        assert not db.exists() or click_db_load(db) == []
        # failed batch ids never appear in the database
        if db.exists():
            assert all(r.batch_id != batch.batch_id for r in click_db_load(db))

    def test_non_golden_quality_irrelevant(self, tmp_path):
        db = tmp_path / "clicks.jsonl"
        config, batch, submissions, golden_gt = make_batch_and_submissions(golden_hits=True)
        # ruin every non-golden scene
        for sid in batch.scene_ids:
            if sid != batch.golden_scene_id:
                submissions[sid] = ([click_at(999, 999, scene=sid)], 9999.0)
        outcome = process_batch(annotating_session(), batch, submissions, golden_gt, config, db)
        assert outcome.committed

    def test_incomplete_batch(self, tmp_path):
        config, batch, submissions, golden_gt = make_batch_and_submissions(golden_hits=True)
        submissions.pop(batch.scene_ids[0])
        with pytest.raises(IncompleteBatchError):
            process_batch(annotating_session(), batch, submissions, golden_gt, config, tmp_path / "db")

    def test_requalify_then_restart(self, tmp_path):
        config, batch, submissions, golden_gt = make_batch_and_submissions(golden_hits=False)
        outcome = process_batch(annotating_session(), batch, submissions, golden_gt, config, tmp_path / "db")
        session = restart_training(outcome.session)
        assert session.state is SessionState.IN_TRAINING
        assert session.training_results == ()


class TestClickDatabase:
    def record(self, i, tombstone=False):
        return ClickRecord(
            annotator_id="ann",
            scene_id=f"s{i}",
            category=Category.CAR,
            x=float(i),
            y=0.0,
            z=10.0,
            timestamp_ms=float(i * 100),
            batch_id="batch-1",
            tombstone=tombstone,
        )

    def test_append_load_roundtrip(self, tmp_path):
        db = tmp_path / "db.jsonl"
        records = [self.record(i) for i in range(3)]
        click_db_append(db, records)
        assert click_db_load(db) == records

    def test_two_appends_preserve_order(self, tmp_path):
        db = tmp_path / "db.jsonl"
        click_db_append(db, [self.record(0)])
        click_db_append(db, [self.record(1)])
        loaded = click_db_load(db)
        assert [r.scene_id for r in loaded] == ["s0", "s1"]

    def test_corrupt_line_reports_number(self, tmp_path):
        db = tmp_path / "db.jsonl"
        click_db_append(db, [self.record(0)])
        with open(db, "a") as fh:
            fh.write("{not json\n")
        click_db_append(db, [self.record(1)])
        with pytest.raises(ClickDatabaseError, match="line 2"):
            click_db_load(db)

    def test_concurrent_appends_line_atomic(self, tmp_path):
        db = tmp_path / "db.jsonl"
        n_threads, per_thread = 8, 50

        def writer(tid):
            for i in range(per_thread):
                record = ClickRecord(
                    annotator_id=f"ann-{tid}",
                    scene_id=f"s{i}",
                    category=Category.CAR,
                    x=float(i),
                    y=0.0,
                    z=5.0,
                    timestamp_ms=0.0,
                    batch_id=f"batch-{tid}",
                )
                click_db_append(db, [record])

        threads = [threading.Thread(target=writer, args=(t,)) for t in range(n_threads)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        # post-hoc validity oracle: every line parses, all records present
        records = click_db_load(db)
        assert len(records) == n_threads * per_thread
        for line in (tmp_path / "db.jsonl").read_text().splitlines():
            json.loads(line)

    def test_tombstones_void_records(self, tmp_path):
        records = [self.record(0), self.record(1), self.record(0, tombstone=True)]
        active = effective_clicks(records)
        assert [r.scene_id for r in active] == ["s1"]


class TestSessionSnapshot:
    def test_json_roundtrip(self):
        session = annotating_session()
        payload = session_to_json(session)
        again = session_from_json(payload)
        assert session_to_json(again) == payload
        assert again.state is session.state
        assert again.training_attempts == session.training_attempts
        json.loads(payload)  # valid JSON
