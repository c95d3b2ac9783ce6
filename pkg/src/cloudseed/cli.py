"""Command line interface for every pipeline stage.

All randomness is seeded from --seed, so rerunning a command with the
same inputs produces byte-identical artifacts.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import benchmark
from .boxfit import (
    BOXNET_POINT_COUNT,
    DEFAULT_HEADING_BINS,
    load_templates,
    save_templates,
    train_boxfit,
)
from .config import k_map_from, resolve_config, train_config_from
from .errors import CloudseedError
from .evaluation import (
    SceneTiming,
    evaluate_pipeline,
    metrics_to_json,
    timing_report,
    write_metrics_csv,
)
from .nn import load_checkpoint, save_checkpoint
from .pipeline import (
    PipelineModels,
    _templates_with_fallback,
    build_boxfit_examples,
    build_boxfit_examples_from_masks,
    build_seg_examples,
    infer_scenes,
    load_click_manifest,
    load_detections,
    save_click_manifest,
    save_detections,
    simulate_scene_clicks,
    split_scenes,
)
from .pointcloud import (
    Category,
    load_scene,
    parse_kitti_calib,
    parse_kitti_labels,
    parse_velodyne_bin,
    save_scene,
    to_camera_frame,
)
from .segmentation import DEFAULT_POINT_COUNT, train_segmentation


def load_scene_dir(path) -> dict:
    """All .cspc scenes in a directory, keyed by file stem."""
    scenes = {}
    for file in sorted(Path(path).glob("*.cspc")):
        cloud, objects = load_scene(file)
        scenes[file.stem] = (cloud, objects)
    if not scenes:
        raise CloudseedError(f"no .cspc scenes found in {path}")
    return scenes


def cmd_ingest(args) -> int:
    calib = parse_kitti_calib(Path(args.calib).read_text())
    cloud = parse_velodyne_bin(Path(args.velodyne).read_bytes())
    cloud = to_camera_frame(cloud, calib)
    objects = parse_kitti_labels(Path(args.labels).read_text()) if args.labels else []
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_scene(out, cloud, objects)
    print(f"wrote {out} ({len(cloud)} points, {len(objects)} objects)")
    return 0


def cmd_synth(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(args.scenes):
        index = args.start + i
        scene_id, cloud, objects = benchmark.make_scene(args.seed, index)
        save_scene(out / f"{scene_id}.cspc", cloud, objects)
    print(f"wrote {args.scenes} scenes to {out}")
    return 0


def cmd_simulate_clicks(args) -> int:
    scenes = load_scene_dir(args.scenes)
    categories = {Category(args.category)} if args.category else None
    entries = simulate_scene_clicks(
        scenes, args.seed, clicks_per_instance=args.clicks_per_instance, categories=categories
    )
    save_click_manifest(args.out, entries)
    print(f"wrote {len(entries)} clicks to {args.out}")
    return 0


def cmd_train_seg(args, config: dict) -> int:
    scenes = load_scene_dir(args.scenes)
    entries = load_click_manifest(args.clicks)
    k_map = k_map_from(config)
    fit_scenes, val_scenes = split_scenes(scenes)
    fit_entries = [e for e in entries if e.scene_id in fit_scenes]
    val_entries = [e for e in entries if e.scene_id in val_scenes]
    train_sets = build_seg_examples(fit_scenes, fit_entries, k_map, args.count)
    val_sets = build_seg_examples(val_scenes, val_entries, k_map, args.count)

    train_config = train_config_from(config, "train_seg", args.seed)
    if args.iters:
        from dataclasses import replace

        train_config = replace(train_config, max_iters=args.iters)
    results = train_segmentation(train_sets, val_sets, train_config)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for category, (params, history) in results.items():
        meta = {"category": category.value, "seed": train_config.rng_seed, "kind": "segmentation"}
        save_checkpoint(out / f"seg-{category.value}.csnn", params, meta)
        (out / f"seg-{category.value}-history.json").write_text(
            json.dumps(history, sort_keys=True) + "\n"
        )
        print(f"{category.value}: final loss {history['loss'][-1]:.4f} -> seg-{category.value}.csnn")
    return 0


def cmd_train_box(args, config: dict) -> int:
    scenes = load_scene_dir(args.scenes)
    category = Category(args.category)
    fit_scenes, val_scenes = split_scenes(scenes)
    all_gt = [o for _, objs in scenes.values() for o in objs]
    templates = _templates_with_fallback(all_gt)

    train_config = train_config_from(config, "train_box", args.seed)
    if args.iters:
        from dataclasses import replace

        train_config = replace(train_config, max_iters=args.iters)
    train_examples = build_boxfit_examples(fit_scenes, category, args.count, train_config.rng_seed)
    val_examples = build_boxfit_examples(val_scenes, category, args.count, train_config.rng_seed + 1)
    if args.seg_model and args.clicks:
        seg_params, _ = load_checkpoint(args.seg_model)
        entries = [e for e in load_click_manifest(args.clicks) if e.category is category]
        k_map = k_map_from(config)
        train_examples += build_boxfit_examples_from_masks(
            fit_scenes,
            seg_params,
            [e for e in entries if e.scene_id in fit_scenes],
            k_map,
            seed=train_config.rng_seed,
            box_count=args.count,
        )
        predicted_val = build_boxfit_examples_from_masks(
            val_scenes,
            seg_params,
            [e for e in entries if e.scene_id in val_scenes],
            k_map,
            seed=train_config.rng_seed + 1,
            box_count=args.count,
        )
        val_examples = predicted_val or val_examples
    tnet, boxnet, history = train_boxfit(
        train_examples, val_examples, templates, train_config, nh=args.heading_bins
    )

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_templates(out / "templates.json", templates)
    save_checkpoint(out / "tnet.csnn", tnet, {"kind": "tnet", "seed": train_config.rng_seed})
    save_checkpoint(
        out / "boxnet.csnn",
        boxnet,
        {"kind": "boxnet", "seed": train_config.rng_seed, "heading_bins": args.heading_bins},
    )
    (out / "box-history.json").write_text(json.dumps(history, sort_keys=True) + "\n")
    print(f"final loss {history['loss'][-1]:.4f} -> tnet.csnn, boxnet.csnn, templates.json")
    return 0


def load_models(models_dir, config: dict) -> PipelineModels:
    models_dir = Path(models_dir)
    seg_models = {}
    for file in sorted(models_dir.glob("seg-*.csnn")):
        params, meta = load_checkpoint(file)
        seg_models[Category(meta["category"])] = params
    if not seg_models:
        raise CloudseedError(f"no segmentation checkpoints in {models_dir}")
    tnet, _ = load_checkpoint(models_dir / "tnet.csnn")
    boxnet, box_meta = load_checkpoint(models_dir / "boxnet.csnn")
    templates = load_templates(models_dir / "templates.json")
    return PipelineModels(
        seg_models=seg_models,
        tnet=tnet,
        boxnet=boxnet,
        templates=templates,
        nh=int(box_meta.get("heading_bins", DEFAULT_HEADING_BINS)),
        k_map=k_map_from(config),
    )


def cmd_infer(args, config: dict) -> int:
    scenes = load_scene_dir(args.scenes)
    entries = load_click_manifest(args.clicks)
    models = load_models(args.models, config)
    detections = infer_scenes(models, scenes, entries)
    save_detections(args.out, detections)
    print(f"wrote {len(detections)} detections ({len(entries)} clicks) to {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    scenes = load_scene_dir(args.scenes)
    detections = load_detections(args.results)
    metrics = evaluate_pipeline(detections, scenes)
    payload = metrics_to_json(metrics)
    if args.out_json:
        Path(args.out_json).write_text(payload + "\n")
    if args.out_csv:
        write_metrics_csv(args.out_csv, metrics)
    print(payload)
    return 0


def cmd_timing_report(args) -> int:
    timings = []
    for line in Path(args.timings).read_text().splitlines():
        if not line.strip():
            continue
        record = json.loads(line)
        timings.append(
            SceneTiming(
                scene_id=record["scene_id"],
                elapsed_s=float(record["elapsed_s"]),
                n_objects=int(record["n_objects"]),
            )
        )
    report = timing_report(timings, csv_path=args.out_csv, figure_path=args.out_figure)
    print(
        f"{report.total_objects} objects in {report.total_seconds:.1f} s -> "
        f"{report.overall_mean_s_per_object:.3f} s/object"
    )
    return 0


def cmd_serve(args, config: dict) -> int:
    import uvicorn

    from .config import ServeConfig
    from .server import create_app

    serve_config = ServeConfig.from_dict(config)
    app = create_app(serve_config)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cloudseed",
        description="Click-seeded LIDAR instance segmentation and 3D box annotation toolkit",
    )
    parser.add_argument("--config", help="TOML or JSON config file (or set CLOUDSEED_CONFIG)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="convert a KITTI frame to the CSPC container")
    p.add_argument("--velodyne", required=True, help="velodyne .bin file")
    p.add_argument("--calib", required=True, help="KITTI calib .txt file")
    p.add_argument("--labels", help="KITTI label .txt file (optional)")
    p.add_argument("--out", required=True, help="output .cspc path")

    p = sub.add_parser("synth", help="generate synthetic scenes")
    p.add_argument("--scenes", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--start", type=int, default=0, help="first scene index")
    p.add_argument("--out", required=True)

    p = sub.add_parser("simulate-clicks", help="simulate annotator clicks on ground truth")
    p.add_argument("--scenes", required=True, help="scene directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--category", help="restrict to one category")
    p.add_argument("--clicks-per-instance", type=int, default=1)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train-seg", help="train per-category segmentation models")
    p.add_argument("--scenes", required=True)
    p.add_argument("--clicks", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--iters", type=int, help="override max iterations")
    p.add_argument("--count", type=int, default=DEFAULT_POINT_COUNT)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train-box", help="train the T-Net and box estimation network")
    p.add_argument("--scenes", required=True)
    p.add_argument("--category", default="car")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--iters", type=int, help="override max iterations")
    p.add_argument("--count", type=int, default=BOXNET_POINT_COUNT)
    p.add_argument("--heading-bins", type=int, default=DEFAULT_HEADING_BINS)
    p.add_argument("--seg-model", help="segmentation checkpoint; adds predicted-mask examples")
    p.add_argument("--clicks", help="click manifest used with --seg-model")
    p.add_argument("--out", required=True)

    p = sub.add_parser("infer", help="click-seeded inference over scenes")
    p.add_argument("--scenes", required=True)
    p.add_argument("--clicks", required=True)
    p.add_argument("--models", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("evaluate", help="score detections against ground truth")
    p.add_argument("--scenes", required=True)
    p.add_argument("--results", required=True)
    p.add_argument("--out-json")
    p.add_argument("--out-csv")

    p = sub.add_parser("timing-report", help="annotation timing statistics")
    p.add_argument("--timings", required=True, help="JSONL of scene_id/elapsed_s/n_objects")
    p.add_argument("--out-csv")
    p.add_argument("--out-figure", help="SVG output path")

    p = sub.add_parser("serve", help="run the annotation HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8008)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = resolve_config(args.config)
        if args.command == "ingest":
            return cmd_ingest(args)
        if args.command == "synth":
            return cmd_synth(args)
        if args.command == "simulate-clicks":
            return cmd_simulate_clicks(args)
        if args.command == "train-seg":
            return cmd_train_seg(args, config)
        if args.command == "train-box":
            return cmd_train_box(args, config)
        if args.command == "infer":
            return cmd_infer(args, config)
        if args.command == "evaluate":
            return cmd_evaluate(args)
        if args.command == "timing-report":
            return cmd_timing_report(args)
        if args.command == "serve":
            return cmd_serve(args, config)
        parser.error(f"unknown command {args.command}")
    except CloudseedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
