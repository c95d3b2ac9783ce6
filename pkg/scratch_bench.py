"""Scratch calibration for the synthetic end-to-end benchmark (not shipped)."""

import time

import numpy as np

from cloudseed.evaluation import evaluate_pipeline
from cloudseed.nn import TrainConfig
from cloudseed.pipeline import (
    PipelineModels,
    infer_scenes,
    simulate_scene_clicks,
    train_pipeline,
)
from cloudseed.pointcloud import Category
from cloudseed.synth import SceneSpec, synthetic_scene


def make_scenes(n, seed, start=0):
    scenes = {}
    for i in range(n):
        counts = {Category.CAR: 1 + (start + i) % 3}
        spec = SceneSpec(counts=counts)
        sid = f"synth-{start + i:04d}"
        derived = int(np.random.SeedSequence((seed, start + i)).generate_state(1)[0])
        cloud, objects = synthetic_scene(spec, derived)
        scenes[sid] = (cloud, list(objects))
    return scenes


def main(n_train=60, n_held=20, seg_iters=400, box_iters=600):
    t0 = time.time()
    train_scenes = make_scenes(n_train, seed=7)
    held_scenes = make_scenes(n_held, seed=7, start=10_000)
    print(f"scenes generated in {time.time()-t0:.1f}s; "
          f"points/scene ~ {np.mean([len(c) for c, _ in train_scenes.values()]):.0f}")

    seg_config = TrainConfig(initial_lr=0.003, decay_factor=0.7, decay_every=800,
                             max_iters=seg_iters, rng_seed=7, batch_size=16, eval_every=200,
                             early_stop_patience=10_000)
    box_config = TrainConfig(initial_lr=0.003, decay_factor=0.7, decay_every=700,
                             max_iters=box_iters, rng_seed=7, batch_size=16, eval_every=200,
                             early_stop_patience=10_000)
    t1 = time.time()
    models, history = train_pipeline(train_scenes, Category.CAR, seg_config, box_config, clicks_per_instance=3)
    t2 = time.time()
    print(f"training: {t2-t1:.1f}s  seg final loss {history['segmentation']['loss'][-1]:.4f} "
          f"box final loss {history['boxfit']['loss'][-1]:.4f}")
    print(f"seg val: {history['segmentation']['val_loss'][-3:]}")
    print(f"box val: {history['boxfit']['val_loss'][-3:]}")

    entries = simulate_scene_clicks(held_scenes, seed=99, clicks_per_instance=1)
    detections = infer_scenes(models, held_scenes, entries)
    t3 = time.time()
    print(f"inference: {t3-t2:.1f}s, {len(detections)} detections / {len(entries)} clicks")
    metrics = evaluate_pipeline(detections, held_scenes)[Category.CAR]
    print(f"iIoU {metrics.mean_iiou:.3f}  centroid {metrics.mean_centroid_error_m:.3f} m "
          f"(std {metrics.centroid_error_std_m:.3f})  boxIoU {metrics.mean_box_iou:.3f}  "
          f"AP {metrics.ap_3d:.3f}  matched {metrics.n_matched}/{metrics.n_instances}")


if __name__ == "__main__":
    import sys

    args = [int(a) for a in sys.argv[1:]]
    main(*args)
