import { Vec3, ViewState, Viewport } from "./types";

/**
 * Orbit camera over a y-down world (KITTI camera frame: x right, y down,
 * z forward). Elevation > 0 places the eye above the target.
 */

export interface Ray {
  origin: Vec3;
  dir: Vec3; // unit length
}

export interface CameraBasis {
  eye: Vec3;
  right: Vec3;
  up: Vec3;
  forward: Vec3; // unit vector from eye toward the target
}

function cross(a: Vec3, b: Vec3): Vec3 {
  return [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
}

function normalize(v: Vec3): Vec3 {
  const n = Math.hypot(v[0], v[1], v[2]);
  return [v[0] / n, v[1] / n, v[2] / n];
}

export function cameraBasis(view: ViewState): CameraBasis {
  const ce = Math.cos(view.elevationRad);
  // forward has +y (downward) when the camera sits above the target
  const forward: Vec3 = normalize([
    ce * Math.sin(view.azimuthRad),
    Math.sin(view.elevationRad),
    ce * Math.cos(view.azimuthRad),
  ]);
  const eye: Vec3 = [
    view.target[0] - forward[0] * view.distance,
    view.target[1] - forward[1] * view.distance,
    view.target[2] - forward[2] * view.distance,
  ];
  const worldUp: Vec3 = [0, -1, 0];
  const right = normalize(cross(forward, worldUp));
  const up = cross(right, forward);
  return { eye, right, up, forward };
}

/** Project a world point to pixel coordinates plus view depth (> 0 in front). */
export function projectPoint(
  view: ViewState,
  viewport: Viewport,
  p: Vec3,
): { x: number; y: number; depth: number } | null {
  const { eye, right, up, forward } = cameraBasis(view);
  const rel: Vec3 = [p[0] - eye[0], p[1] - eye[1], p[2] - eye[2]];
  const depth = rel[0] * forward[0] + rel[1] * forward[1] + rel[2] * forward[2];
  if (depth <= 1e-9) {
    return null;
  }
  const x = rel[0] * right[0] + rel[1] * right[1] + rel[2] * right[2];
  const y = rel[0] * up[0] + rel[1] * up[1] + rel[2] * up[2];
  const tanHalf = Math.tan(view.fovYRad / 2);
  const aspect = viewport.width / viewport.height;
  const ndcX = x / (depth * tanHalf * aspect);
  const ndcY = y / (depth * tanHalf);
  return {
    x: ((ndcX + 1) / 2) * viewport.width,
    y: ((1 - ndcY) / 2) * viewport.height,
    depth,
  };
}

/** The world-space ray from the camera through a cursor position. */
export function rayThroughPixel(view: ViewState, viewport: Viewport, px: number, py: number): Ray {
  const { eye, right, up, forward } = cameraBasis(view);
  const tanHalf = Math.tan(view.fovYRad / 2);
  const aspect = viewport.width / viewport.height;
  const ndcX = (2 * px) / viewport.width - 1;
  const ndcY = 1 - (2 * py) / viewport.height;
  const vx = ndcX * tanHalf * aspect;
  const vy = ndcY * tanHalf;
  const dir: Vec3 = [
    right[0] * vx + up[0] * vy + forward[0],
    right[1] * vx + up[1] * vy + forward[1],
    right[2] * vx + up[2] * vy + forward[2],
  ];
  const n = Math.hypot(dir[0], dir[1], dir[2]);
  return { origin: eye, dir: [dir[0] / n, dir[1] / n, dir[2] / n] };
}
