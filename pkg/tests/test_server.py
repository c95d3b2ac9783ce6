import json
import threading

import pytest
from fastapi.testclient import TestClient

from cloudseed.config import ServeConfig
from cloudseed.geometry import points_in_box
from cloudseed.pointcloud import Category, decode_cspc, load_scene, save_scene
from cloudseed.server import create_app
from cloudseed.synth import SceneSpec, synthetic_scene
from cloudseed.workflow import QAConfig, click_db_load

QA = QAConfig(batch_size=3)


@pytest.fixture(scope="module")
def service_env(tmp_path_factory):
    root = tmp_path_factory.mktemp("serve")
    for name, count, start in (("training", 6, 0), ("golden", 3, 100), ("annotation", 8, 200)):
        directory = root / name
        directory.mkdir()
        for i in range(count):
            spec = SceneSpec(counts={Category.CAR: 2})
            cloud, objects = synthetic_scene(spec, seed=start + i)
            save_scene(directory / f"{name}-{i:03d}.cspc", cloud, objects)
    config = ServeConfig(
        training_dir=root / "training",
        golden_dir=root / "golden",
        annotation_dir=root / "annotation",
        out_dir=root / "out",
        category=Category.CAR,
        qa=QA,
        seed=11,
    )
    return config, root


@pytest.fixture()
def client(service_env):
    config, _ = service_env
    return TestClient(create_app(config))


def open_session(client, annotator="ann-1"):
    response = client.post("/session", json={"annotator_id": annotator, "category": "car"})
    assert response.status_code == 200
    return response.json()["token"]


def gt_clicks_for(scene_id: str, root, subdir=None):
    """One click inside every car box of the scene, straight from gt."""
    for name in ("training", "golden", "annotation"):
        path = root / name / f"{scene_id}.cspc"
        if path.exists():
            cloud, objects = load_scene(path)
            clicks = []
            for obj in objects:
                inside = points_in_box(cloud, obj.box)
                p = cloud.points[inside[0]]
                clicks.append({"x": p[0], "y": p[1], "z": p[2], "timestamp_ms": 0.0})
            return clicks
    raise AssertionError(f"scene {scene_id} not found")


def submit(client, token, scene_id, clicks, elapsed):
    return client.post(
        f"/scene/{scene_id}/clicks",
        json={"clicks": clicks, "elapsed_s": elapsed},
        headers={"x-session-token": token},
    )


def complete_training(client, token, root, should_pass=True):
    last = None
    for _ in range(QA.training_scenes):
        scene = client.get("/scene/next", headers={"x-session-token": token}).json()
        clicks = gt_clicks_for(scene["scene_id"], root) if should_pass else []
        last = submit(client, token, scene["scene_id"], clicks, 5.0).json()
    return last


class TestSessionLifecycle:
    def test_create_session(self, client):
        response = client.post("/session", json={"annotator_id": "a", "category": "car"})
        body = response.json()
        assert response.status_code == 200
        assert body["state"] == "in_training"
        assert len(body["token"]) == 32

    def test_invalid_token_is_401(self, client):
        assert client.get("/scene/next", headers={"x-session-token": "bogus"}).status_code == 401
        assert client.get("/scene/next").status_code == 401

    def test_training_pass_unlocks_annotation(self, client, service_env):
        _, root = service_env
        token = open_session(client)
        last = complete_training(client, token, root, should_pass=True)
        assert last["state"] == "annotating"
        assert last["scene_passed"] is True

    def test_training_fail_issues_new_sequence(self, client, service_env):
        _, root = service_env
        token = open_session(client, "ann-fail")
        last = complete_training(client, token, root, should_pass=False)
        assert last["state"] == "in_training"
        state = client.get("/session/state", headers={"x-session-token": token}).json()
        assert state["training_attempts"] == 1

    def test_review_reflects_verdicts(self, client, service_env):
        _, root = service_env
        token = open_session(client, "ann-review")
        scene = client.get("/scene/next", headers={"x-session-token": token}).json()
        clicks = gt_clicks_for(scene["scene_id"], root)
        clicks.append({"x": 500.0, "y": 0.0, "z": 500.0, "timestamp_ms": 1.0})  # a miss
        submit(client, token, scene["scene_id"], clicks, 5.0)
        review = client.get("/review", headers={"x-session-token": token}).json()
        verdicts = [c["inside"] for c in review["scenes"][0]["clicks"]]
        assert verdicts.count(False) == 1
        assert all(verdicts[:-1])


class TestScenePayload:
    def test_payload_byte_identical_to_disk(self, client, service_env):
        _, root = service_env
        token = open_session(client, "ann-payload")
        scene = client.get("/scene/next", headers={"x-session-token": token}).json()
        response = client.get(scene["payload_url"])
        assert response.status_code == 200
        assert response.headers["content-type"] == "application/octet-stream"
        on_disk = (root / "training" / f"{scene['scene_id']}.cspc").read_bytes()
        assert response.content == on_disk
        decode_cspc(response.content)  # parses as a valid container

    def test_unknown_scene_404(self, client):
        assert client.get("/scene/nope/payload").status_code == 404


class TestAnnotationFlow:
    def run_batch(self, client, token, root, golden_ok=True):
        """Annotate one full batch; golden quality controlled by golden_ok."""
        result = None
        for _ in range(QA.batch_size + 1):
            scene = client.get("/scene/next", headers={"x-session-token": token}).json()
            assert scene["phase"] == "annotation"
            sid = scene["scene_id"]
            if sid.startswith("golden") and not golden_ok:
                clicks = []
            else:
                clicks = gt_clicks_for(sid, root)
            result = submit(client, token, sid, clicks, 5.0).json()
        return result

    def test_golden_pass_commits(self, client, service_env):
        config, root = service_env
        token = open_session(client, "ann-commit")
        complete_training(client, token, root)
        before = len(click_db_load(config.out_dir / "clicks.jsonl")) if (
            config.out_dir / "clicks.jsonl"
        ).exists() else 0
        result = self.run_batch(client, token, root, golden_ok=True)
        assert result["batch_committed"] is True
        assert result["state"] == "annotating"  # a new batch seamlessly begins
        after = len(click_db_load(config.out_dir / "clicks.jsonl"))
        assert after == before + result["records_appended"]
        assert result["records_appended"] > 0

    def test_golden_fail_discards_and_requalifies(self, client, service_env):
        config, root = service_env
        token = open_session(client, "ann-discard")
        complete_training(client, token, root)
        db_path = config.out_dir / "clicks.jsonl"
        before = len(click_db_load(db_path)) if db_path.exists() else 0
        result = self.run_batch(client, token, root, golden_ok=False)
        assert result["batch_committed"] is False
        assert result["state"] == "failed_requalify"
        after = len(click_db_load(db_path)) if db_path.exists() else 0
        assert after == before  # nothing persisted
        # next scene request lands back in training
        scene = client.get("/scene/next", headers={"x-session-token": token}).json()
        assert scene["phase"] == "training"

    def test_out_of_order_submission_conflicts(self, client, service_env):
        _, root = service_env
        token = open_session(client, "ann-order")
        client.get("/scene/next", headers={"x-session-token": token}).json()
        response = submit(client, token, "training-005", [], 1.0)
        other = submit(client, token, "not-a-scene", [], 1.0)
        assert response.status_code in (200, 409)  # only the pending scene is accepted
        assert other.status_code == 409

    def test_concurrent_sessions_no_cross_contamination(self, client, service_env):
        config, root = service_env
        db_path = config.out_dir / "clicks.jsonl"
        before = len(click_db_load(db_path)) if db_path.exists() else 0

        tokens = {}
        results = {}

        def annotator(name):
            token = open_session(client, name)
            tokens[name] = token
            complete_training(client, token, root)
            results[name] = self.run_batch(client, token, root, golden_ok=True)

        threads = [threading.Thread(target=annotator, args=(f"conc-{i}",)) for i in range(2)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()

        assert all(r["batch_committed"] for r in results.values())
        records = click_db_load(db_path)
        assert len(records) == before + sum(r["records_appended"] for r in results.values())
        by_annotator = {name: [r for r in records if r.annotator_id == name] for name in results}
        for name, recs in by_annotator.items():
            assert recs, f"{name} wrote no records"
            assert {r.annotator_id for r in recs} == {name}
        # states remained independent
        for name, token in tokens.items():
            state = client.get("/session/state", headers={"x-session-token": token}).json()
            assert state["annotator_id"] == name
            assert state["state"] == "annotating"
