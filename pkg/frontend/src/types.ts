export type Vec3 = [number, number, number];

export type ColorMode = "intensity" | "height";

/** Decoded CSPC payload. Positions keep the exact float32 wire values. */
export interface CloudData {
  count: number;
  positions: Float32Array; // xyz interleaved, length 3 * count
  intensity: Float32Array | null;
  frame: "lidar" | "camera";
}

/** Orbit camera plus display options; owned by the viewer, never by the session. */
export interface ViewState {
  target: Vec3;
  azimuthRad: number;
  elevationRad: number; // > 0 looks down on the scene (camera frame y points down)
  distance: number;
  fovYRad: number;
  pointSizePx: number;
  colorMode: ColorMode;
  activeCategory: string;
}

export interface Viewport {
  width: number;
  height: number;
}

/** A click snapped to a measured cloud point; position is bitwise the point's. */
export interface PendingClick {
  pointIndex: number;
  position: Vec3;
  placedAtMs: number;
}

export interface ReviewClick {
  x: number;
  y: number;
  z: number;
  inside: boolean;
}

export interface ReviewScene {
  scene_id: string;
  recall: number;
  precision: number;
  elapsed: number;
  time_budget: number;
  passed: boolean;
  clicks: ReviewClick[];
}

export interface ReviewPayload {
  scenes: ReviewScene[];
  scenes_completed: number;
  state: string;
}

export function defaultViewState(): ViewState {
  return {
    target: [0, 0, 12],
    azimuthRad: 0,
    elevationRad: 0.5,
    distance: 18,
    fovYRad: Math.PI / 4,
    pointSizePx: 3,
    colorMode: "height",
    activeCategory: "car",
  };
}
