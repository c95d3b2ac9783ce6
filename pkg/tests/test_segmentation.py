import numpy as np
import pytest

from cloudseed.errors import (
    BelowThresholdError,
    InstanceTooSparseError,
    LabelAmbiguityError,
)
from cloudseed.geometry import Box3D, points_in_box
from cloudseed.nn import ArchDescriptor, TrainConfig, encode_checkpoint, init_params, lr_at
from cloudseed.pointcloud import Category, Frame, GroundTruthObject, PointCloud
from cloudseed.segmentation import (
    Click,
    SegExample,
    make_seg_example,
    segment_instance,
    simulate_click,
    train_category_model,
    train_segmentation,
)

TINY_ARCH = ArchDescriptor((8, 16), (16, 8), "per_point_binary", dropout_keep=0.7)


def constant_logit_model(arch, foreground_logit):
    """All-zero network except a head bias emitting fixed logits."""
    params = init_params(arch, 0).with_values(np.zeros(arch.parameter_count()))
    values = params.values.copy()
    offset, shape = params.layout["head.b"]
    values[offset : offset + int(np.prod(shape))] = [-foreground_logit, foreground_logit]
    return params.with_values(values)


def single_car_scene(n_object=60, n_clutter=40, seed=0):
    rng = np.random.default_rng(seed)
    box = Box3D(cx=0.0, cy=0.5, cz=10.0, h=1.5, w=1.6, l=3.9, ry=0.4)
    local = rng.uniform(-1, 1, size=(n_object, 3)) * np.array([box.l / 2, box.h / 2, box.w / 2])
    obj_pts = local @ box.rotation().T + box.centroid
    clutter = rng.uniform(-1, 1, size=(n_clutter, 3)) * np.array([6, 0.1, 6]) + np.array(
        [0, 1.4, 10.0]
    )
    cloud = PointCloud(points=np.vstack([obj_pts, clutter]), frame=Frame.CAMERA)
    gt = GroundTruthObject(category=Category.CAR, box=box)
    return cloud, gt


class TestSimulateClick:
    def test_single_point_box(self):
        cloud = PointCloud(points=[[0, 0, 10.0], [50, 0, 0]], frame=Frame.CAMERA)
        gt = GroundTruthObject(category=Category.CAR, box=Box3D(0, 0, 10, 2, 2, 2))
        click = simulate_click(cloud, gt, seed=5)
        np.testing.assert_array_equal(click.position, [0, 0, 10.0])
        assert click.category is Category.CAR

    def test_click_always_inside_box(self):
        cloud, gt = single_car_scene()
        for seed in range(50):
            click = simulate_click(cloud, gt, seed)
            assert points_in_box(click.position[None, :], gt.box).size == 1

    def test_uniform_coverage(self):
        rng = np.random.default_rng(1)
        pts = rng.uniform(-0.4, 0.4, size=(10, 3)) + np.array([0, 0, 10.0])
        cloud = PointCloud(points=pts, frame=Frame.CAMERA)
        gt = GroundTruthObject(category=Category.CAR, box=Box3D(0, 0, 10, 1, 1, 1))
        seen = set()
        for seed in range(1000):
            click = simulate_click(cloud, gt, seed)
            seen.add(int(np.argmin(np.linalg.norm(pts - click.position, axis=1))))
        assert seen == set(range(10))

    def test_sparse_instance_raises(self):
        cloud = PointCloud(points=[[100, 0, 0]], frame=Frame.CAMERA)
        gt = GroundTruthObject(category=Category.CAR, box=Box3D(0, 0, 10, 2, 2, 2))
        with pytest.raises(InstanceTooSparseError):
            simulate_click(cloud, gt, seed=0)


class TestMakeSegExample:
    def test_isolated_box_all_foreground(self):
        cloud, gt = single_car_scene(n_clutter=0)
        click = simulate_click(cloud, gt, seed=2)
        example = make_seg_example(cloud, [gt], click, k=8.0, count=128, seed=0)
        assert example.labels.all()

    def test_clutter_labeled_background(self):
        cloud, gt = single_car_scene()
        click = simulate_click(cloud, gt, seed=3)
        example = make_seg_example(cloud, [gt], click, k=8.0, count=256, seed=0)
        assert not example.labels.all()
        assert example.labels.any()

    def test_labels_match_containment_oracle(self):
        cloud, gt = single_car_scene(seed=4)
        click = simulate_click(cloud, gt, seed=4)
        example = make_seg_example(cloud, [gt], click, k=8.0, count=256, seed=1)
        original = example.input_points + click.position
        oracle = np.zeros(len(original), dtype=np.int64)
        oracle[points_in_box(original, gt.box)] = 1
        np.testing.assert_array_equal(example.labels, oracle)

    def test_click_outside_every_box(self):
        cloud, gt = single_car_scene()
        stray = Click(scene_id="s", category=Category.CAR, position=np.array([0.0, 1.4, 16.9]))
        with pytest.raises(LabelAmbiguityError):
            make_seg_example(cloud, [gt], stray, k=8.0, count=64, seed=0)

    def test_requires_foreground(self):
        with pytest.raises(ValueError):
            SegExample(input_points=np.zeros((4, 3)), labels=np.zeros(4, dtype=int))


def make_training_example(seed, count=96):
    """Linearly separable toy patch: foreground above, background below."""
    rng = np.random.default_rng(seed)
    n_fg = count // 2
    fg = rng.normal(scale=0.4, size=(n_fg, 3)) + np.array([0, -1.0, 0])
    bg = rng.normal(scale=0.4, size=(count - n_fg, 3)) + np.array([0, 1.0, 0])
    labels = np.concatenate([np.ones(n_fg, dtype=int), np.zeros(count - n_fg, dtype=int)])
    return SegExample(input_points=np.vstack([fg, bg]), labels=labels)


class TestTraining:
    def test_overfits_separable_example(self):
        example = make_training_example(0)
        config = TrainConfig(max_iters=200, rng_seed=1, batch_size=4, eval_every=50)
        params, history = train_category_model([example], [], config, arch=TINY_ARCH)
        assert history["loss"][-1] < 0.1

    def test_history_lr_matches_schedule(self):
        example = make_training_example(1)
        config = TrainConfig(max_iters=30, decay_every=10, rng_seed=2, batch_size=2)
        _, history = train_category_model([example], [], config, arch=TINY_ARCH)
        assert history["lr"] == [lr_at(config, i) for i in range(30)]

    def test_training_deterministic(self):
        examples = [make_training_example(s) for s in range(4)]
        config = TrainConfig(max_iters=40, rng_seed=3, batch_size=2, eval_every=10)
        runs = [
            train_segmentation(
                {Category.CAR: examples[:3]}, {Category.CAR: examples[3:]}, config, arch=TINY_ARCH
            )
            for _ in range(2)
        ]
        a = runs[0][Category.CAR][0]
        b = runs[1][Category.CAR][0]
        assert encode_checkpoint(a) == encode_checkpoint(b)


class TestSegmentInstance:
    def test_always_foreground_model_masks_whole_patch(self):
        cloud, gt = single_car_scene()
        click = simulate_click(cloud, gt, seed=6)
        model = constant_logit_model(TINY_ARCH, +10.0)
        mask = segment_instance(model, cloud, click, k=8.0, count=64)
        from cloudseed.pointcloud import crop_volume

        patch = crop_volume(cloud, click.position, 8.0)
        assert set(mask.source_indices.tolist()) == set(patch.source_indices.tolist())
        assert mask.foreground_confidence.min() > 0.99

    def test_always_background_model_raises(self):
        cloud, gt = single_car_scene()
        click = simulate_click(cloud, gt, seed=7)
        model = constant_logit_model(TINY_ARCH, -10.0)
        with pytest.raises(BelowThresholdError) as excinfo:
            segment_instance(model, cloud, click, k=8.0, count=64)
        assert excinfo.value.max_confidence < 0.01

    def test_mask_indices_stay_inside_volume(self):
        cloud, gt = single_car_scene()
        click = simulate_click(cloud, gt, seed=8)
        model = constant_logit_model(TINY_ARCH, +10.0)
        mask = segment_instance(model, cloud, click, k=8.0, count=32)
        offsets = np.abs(cloud.points[mask.source_indices] - click.position)
        assert (offsets <= 4.0 + 1e-12).all()

    def test_deterministic_in_eval_mode(self):
        cloud, gt = single_car_scene(seed=9)
        click = simulate_click(cloud, gt, seed=9)
        model = init_params(TINY_ARCH, 42)
        results = [segment_instance(model, cloud, click, k=8.0, count=64) for _ in range(2)]
        np.testing.assert_array_equal(results[0].source_indices, results[1].source_indices)
        np.testing.assert_array_equal(
            results[0].foreground_confidence, results[1].foreground_confidence
        )

    def test_large_patch_fully_covered(self):
        from cloudseed.pointcloud import crop_volume

        rng = np.random.default_rng(10)
        pts = rng.uniform(-3, 3, size=(500, 3)) + np.array([0, 0, 10.0])
        cloud = PointCloud(points=pts, frame=Frame.CAMERA)
        click = Click(scene_id="s", category=Category.CAR, position=pts[0])
        model = constant_logit_model(TINY_ARCH, +10.0)
        mask = segment_instance(model, cloud, click, k=8.0, count=64)
        patch = crop_volume(cloud, click.position, 8.0)
        assert len(patch) > 64  # the chunked path is actually exercised
        # every patch point got a prediction, despite the small network input
        assert set(mask.source_indices.tolist()) == set(patch.source_indices.tolist())


def test_label_flip_symmetry():
    """Binary-head sanity: flipping labels mirrors which class CE favors."""
    from cloudseed.nn import cross_entropy_per_point

    rng = np.random.default_rng(11)
    logits = rng.normal(size=(30, 2))
    labels = rng.integers(0, 2, size=30)
    flipped_logits = logits[:, ::-1]
    assert cross_entropy_per_point(logits, labels) == pytest.approx(
        cross_entropy_per_point(flipped_logits, 1 - labels), abs=1e-12
    )
