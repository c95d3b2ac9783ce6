import { ReviewPayload, Vec3 } from "./types";

/**
 * Display model of the training review window.
 *
 * Marker colors come solely from the server's per-click verdicts and the
 * panel re-displays the server's metric values verbatim; the client
 * never recomputes containment or scores.
 */

export type MarkerColor = "green" | "red";

export interface ReviewMarker {
  position: Vec3;
  color: MarkerColor;
}

export interface ReviewSceneOverlay {
  sceneId: string;
  markers: ReviewMarker[];
  recallText: string;
  precisionText: string;
  elapsedText: string;
  budgetText: string;
  passed: boolean;
}

export interface ReviewOverlay {
  scenes: ReviewSceneOverlay[];
  allPassed: boolean;
  scenesCompleted: number;
}

export function buildReviewOverlay(payload: ReviewPayload): ReviewOverlay {
  if (!payload || !Array.isArray(payload.scenes)) {
    throw new Error("malformed review payload");
  }
  const scenes = payload.scenes.map((scene) => {
    if (!Array.isArray(scene.clicks)) {
      throw new Error(`malformed review payload for scene ${scene.scene_id}`);
    }
    return {
      sceneId: scene.scene_id,
      markers: scene.clicks.map((click) => ({
        position: [click.x, click.y, click.z] as Vec3,
        color: (click.inside ? "green" : "red") as MarkerColor,
      })),
      recallText: String(scene.recall),
      precisionText: String(scene.precision),
      elapsedText: String(scene.elapsed),
      budgetText: String(scene.time_budget),
      passed: scene.passed,
    };
  });
  return {
    scenes,
    allPassed: scenes.length > 0 && scenes.every((s) => s.passed),
    scenesCompleted: payload.scenes_completed,
  };
}
