"""Diagnose the unmatched tail of the synthetic benchmark (not shipped)."""

import pickle
import time

import numpy as np

from cloudseed.boxfit import box_estimate, tnet_centroid
from cloudseed.evaluation import evaluate_pipeline, match_detections, _sorted_detection_order
from cloudseed.geometry import box_iou_3d, centroid_distance, instance_iou, points_in_box, wrap_angle
from cloudseed.nn import TrainConfig, sample_fixed_points
from cloudseed.pipeline import PipelineModels, infer_scenes, simulate_scene_clicks, train_pipeline
from cloudseed.pointcloud import Category
from scratch_bench import make_scenes


def main():
    train_scenes = make_scenes(200, seed=7)
    held_scenes = make_scenes(50, seed=7, start=10_000)
    seg_config = TrainConfig(initial_lr=0.003, decay_factor=0.7, decay_every=800,
                             max_iters=3000, rng_seed=7, batch_size=16, eval_every=200,
                             early_stop_patience=10_000)
    box_config = TrainConfig(initial_lr=0.003, decay_factor=0.7, decay_every=700,
                             max_iters=3200, rng_seed=7, batch_size=16, eval_every=200,
                             early_stop_patience=10_000)
    t0 = time.time()
    models, history = train_pipeline(train_scenes, Category.CAR, seg_config, box_config,
                                     clicks_per_instance=3)
    print(f"trained in {time.time()-t0:.0f}s")
    with open("/tmp/diag_models.pkl", "wb") as fh:
        pickle.dump(models, fh)

    entries = simulate_scene_clicks(held_scenes, seed=99, clicks_per_instance=1)
    detections = infer_scenes(models, held_scenes, entries)
    with open("/tmp/diag_data.pkl", "wb") as fh:
        pickle.dump((held_scenes, entries, detections), fh)

    analyze(models, held_scenes, entries, detections)


def analyze(models, held_scenes, entries, detections):
    gt_boxes = {sid: [o.box for o in objs] for sid, (_, objs) in held_scenes.items()}
    order = _sorted_detection_order(detections)
    flags, matches = match_detections(detections, gt_boxes, 0.5)

    rows = []
    for pos, (flag, match) in zip(order, zip(flags, matches)):
        det = detections[pos]
        cloud, objs = held_scenes[det.scene_id]
        # nearest gt of the scene by centroid
        dists = [centroid_distance(det.box, o.box) for o in objs]
        j = int(np.argmin(dists))
        gt = objs[j].box
        gt_points = points_in_box(cloud, gt)
        iiou = instance_iou(det.mask.source_indices, gt_points)
        iou = box_iou_3d(det.box, gt)
        dyaw = abs(wrap_angle(det.box.ry - gt.ry))
        size_err = np.abs(np.array([det.box.h, det.box.w, det.box.l]) -
                          np.array([gt.h, gt.w, gt.l]))
        rows.append(dict(matched=flag, iou=iou, iiou=iiou, cerr=dists[j], dyaw=dyaw,
                         serr=float(size_err.max()), score=det.score,
                         n_mask=det.mask.source_indices.size, n_gt=gt_points.size))
    rows.sort(key=lambda r: r["iou"])
    print("\nworst 15 by box IoU:")
    for r in rows[:15]:
        print(f"  IoU {r['iou']:.2f} iIoU {r['iiou']:.2f} cerr {r['cerr']:.2f} "
              f"dyaw {np.degrees(r['dyaw']):5.1f}deg serr {r['serr']:.2f} "
              f"score {r['score']:.3f} mask {r['n_mask']}/{r['n_gt']}")
    matched = [r for r in rows if r["matched"]]
    un = [r for r in rows if not r["matched"]]
    print(f"\nmatched {len(matched)} unmatched {len(un)}")
    if un:
        print("unmatched stats: iIoU", np.mean([r['iiou'] for r in un]).round(2),
              "| dyaw deg", np.mean([np.degrees(r['dyaw']) for r in un]).round(1),
              "| cerr", np.mean([r['cerr'] for r in un]).round(2),
              "| serr", np.mean([r['serr'] for r in un]).round(2))
    scores_m = [r["score"] for r in matched]
    scores_u = [r["score"] for r in un]
    if scores_u:
        print("score mean matched", np.mean(scores_m).round(3), "unmatched", np.mean(scores_u).round(3))
    metrics = evaluate_pipeline(detections, held_scenes)[Category.CAR]
    print(f"\niIoU {metrics.mean_iiou:.3f} centroid {metrics.mean_centroid_error_m:.3f} "
          f"boxIoU {metrics.mean_box_iou:.3f} AP {metrics.ap_3d:.3f}")


if __name__ == "__main__":
    main()
