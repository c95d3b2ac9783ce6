"""Frozen desk-scale synthetic benchmark used by the acceptance suite.

Scene family, seeds, and training configuration are pinned here so the
CLI pipeline and the acceptance tests run the identical experiment. The
thresholds sit at or below the full-scale reference magnitudes and were
computed once from this benchmark, then frozen.
"""

from __future__ import annotations

import numpy as np

from .nn import TrainConfig
from .pointcloud import Category
from .synth import SceneSpec, synthetic_scene

BENCHMARK_SEED = 7
N_TRAIN_SCENES = 200
N_HELDOUT_SCENES = 50
HELDOUT_START = 10_000

# Held-out gates for the car-sized category.
MIN_MEAN_IIOU = 0.80
MAX_MEAN_CENTROID_M = 0.25
MIN_MEAN_BOX_IOU = 0.50
MIN_AP_AT_05 = 0.80

CARS_CYCLE = (1, 2, 3)


def scene_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence((seed, index)).generate_state(1)[0])


def scene_spec_for(index: int) -> SceneSpec:
    return SceneSpec(counts={Category.CAR: CARS_CYCLE[index % len(CARS_CYCLE)]})


def make_scene(seed: int, index: int):
    """One benchmark scene: (scene_id, cloud, ground truth objects)."""
    cloud, objects = synthetic_scene(scene_spec_for(index), scene_seed(seed, index))
    return f"synth-{index:05d}", cloud, objects


def make_scene_set(seed: int, count: int, start: int = 0) -> dict:
    scenes = {}
    for i in range(count):
        scene_id, cloud, objects = make_scene(seed, start + i)
        scenes[scene_id] = (cloud, objects)
    return scenes


def seg_train_config(seed: int = BENCHMARK_SEED) -> TrainConfig:
    return TrainConfig(
        initial_lr=0.003,
        decay_factor=0.7,
        decay_every=800,
        max_iters=1800,
        early_stop_patience=1800,
        rng_seed=seed,
        batch_size=16,
        eval_every=200,
    )


def box_train_config(seed: int = BENCHMARK_SEED) -> TrainConfig:
    return TrainConfig(
        initial_lr=0.003,
        decay_factor=0.7,
        decay_every=700,
        max_iters=2200,
        early_stop_patience=2200,
        rng_seed=seed,
        batch_size=16,
        eval_every=200,
    )
