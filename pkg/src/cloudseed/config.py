"""Job configuration: TOML/JSON files with CLI-flag overrides.

The CLOUDSEED_CONFIG environment variable names a fallback config file
used when --config is not given.
"""

from __future__ import annotations

import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .nn import TrainConfig
from .pointcloud import Category
from .segmentation import DEFAULT_POINT_COUNT, DEFAULT_VOLUME_EDGE
from .workflow import QAConfig

ENV_CONFIG_VAR = "CLOUDSEED_CONFIG"


def load_config_file(path) -> dict:
    path = Path(path)
    raw = path.read_bytes()
    if path.suffix.lower() == ".json":
        return json.loads(raw.decode("utf-8"))
    return tomllib.loads(raw.decode("utf-8"))


def resolve_config(explicit_path: Optional[str]) -> dict:
    """Explicit --config wins; otherwise CLOUDSEED_CONFIG; otherwise {}."""
    if explicit_path:
        return load_config_file(explicit_path)
    env_path = os.environ.get(ENV_CONFIG_VAR)
    if env_path:
        return load_config_file(env_path)
    return {}


def qa_config_from(data: dict) -> QAConfig:
    section = data.get("qa", {})
    return QAConfig(
        t_object=float(section.get("t_object", 7.0)),
        t_scene=float(section.get("t_scene", 7.0)),
        min_recall=float(section.get("min_recall", 0.8)),
        min_precision=float(section.get("min_precision", 0.6)),
        training_scenes=int(section.get("training_scenes", 5)),
        batch_size=int(section.get("batch_size", 20)),
    )


def train_config_from(data: dict, section_name: str, seed: int) -> TrainConfig:
    section = data.get(section_name, {})
    return TrainConfig(
        initial_lr=float(section.get("initial_lr", 0.01)),
        decay_factor=float(section.get("decay_factor", 0.7)),
        decay_every=int(section.get("decay_every", 12_500)),
        max_iters=int(section.get("max_iters", 2000)),
        early_stop_patience=int(section.get("early_stop_patience", 2000)),
        rng_seed=int(section.get("rng_seed", seed)),
        batch_size=int(section.get("batch_size", 32)),
        eval_every=int(section.get("eval_every", 200)),
    )


def k_map_from(data: dict) -> dict[Category, float]:
    section = data.get("k", {})
    k_map = dict(DEFAULT_VOLUME_EDGE)
    for key, value in section.items():
        k_map[Category(key)] = float(value)
    return k_map


@dataclass
class ServeConfig:
    """Everything the annotation service needs to run."""

    training_dir: Path
    golden_dir: Path
    annotation_dir: Path
    out_dir: Path
    category: Category = Category.CAR
    qa: QAConfig = field(default_factory=QAConfig)
    seed: int = 0
    point_count_hint: int = DEFAULT_POINT_COUNT

    @classmethod
    def from_dict(cls, data: dict) -> "ServeConfig":
        paths = data.get("paths", {})
        return cls(
            training_dir=Path(paths["training_dir"]),
            golden_dir=Path(paths["golden_dir"]),
            annotation_dir=Path(paths["annotation_dir"]),
            out_dir=Path(paths.get("out_dir", "serve-out")),
            category=Category(data.get("category", "car")),
            qa=qa_config_from(data),
            seed=int(data.get("seed", 0)),
        )
