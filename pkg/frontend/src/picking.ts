import { rayThroughPixel } from "./camera";
import { pointAt } from "./cspc";
import { CloudData, PendingClick, ViewState, Viewport } from "./types";

// Pick cone: 8 pixels at the 1080-line reference resolution, scaled with
// the field of view. Clicks can only ever land on a measured point.
export const PICK_RADIUS_PX = 8;
export const REFERENCE_HEIGHT_PX = 1080;

export function pickAngleRad(view: ViewState): number {
  return (PICK_RADIUS_PX / REFERENCE_HEIGHT_PX) * view.fovYRad;
}

/**
 * Snap a cursor position to the cloud point nearest the view ray.
 *
 * Candidates are the points within the fixed angular pick radius of the
 * ray and in front of the camera; among them the point with the smallest
 * perpendicular ray distance wins (lowest index on ties). Returns null
 * when no point qualifies, e.g. a click on empty sky.
 */
export function pickPoint(
  px: number,
  py: number,
  view: ViewState,
  viewport: Viewport,
  cloud: CloudData,
  nowMs: number = 0,
): PendingClick | null {
  const ray = rayThroughPixel(view, viewport, px, py);
  const tanPick = Math.tan(pickAngleRad(view));
  let bestIndex = -1;
  let bestPerp = Infinity;
  const pos = cloud.positions;
  for (let i = 0; i < cloud.count; i++) {
    const wx = pos[3 * i] - ray.origin[0];
    const wy = pos[3 * i + 1] - ray.origin[1];
    const wz = pos[3 * i + 2] - ray.origin[2];
    const t = wx * ray.dir[0] + wy * ray.dir[1] + wz * ray.dir[2];
    if (t <= 0) {
      continue; // behind the camera
    }
    const dx = wx - t * ray.dir[0];
    const dy = wy - t * ray.dir[1];
    const dz = wz - t * ray.dir[2];
    const perp = Math.hypot(dx, dy, dz);
    if (perp > t * tanPick) {
      continue; // outside the angular pick radius
    }
    if (perp < bestPerp) {
      bestPerp = perp;
      bestIndex = i;
    }
  }
  if (bestIndex < 0) {
    return null;
  }
  return { pointIndex: bestIndex, position: pointAt(cloud, bestIndex), placedAtMs: nowMs };
}
