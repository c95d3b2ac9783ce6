import { describe, expect, it } from "vitest";

import { projectPoint, rayThroughPixel } from "../src/camera";
import { pickAngleRad, pickPoint } from "../src/picking";
import { CloudData, Viewport, defaultViewState } from "../src/types";

const VIEWPORT: Viewport = { width: 1280, height: 800 };

function cloudOf(points: number[][]): CloudData {
  const positions = new Float32Array(points.length * 3);
  points.forEach((p, i) => positions.set(p, 3 * i));
  return { count: points.length, positions, intensity: null, frame: "camera" };
}

function randomCloud(n: number, seedFn: () => number): CloudData {
  const pts: number[][] = [];
  for (let i = 0; i < n; i++) {
    pts.push([(seedFn() - 0.5) * 12, (seedFn() - 0.5) * 4, 8 + seedFn() * 12]);
  }
  return cloudOf(pts);
}

/** Deterministic LCG so the oracle comparison is reproducible. */
function lcg(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state * 1664525 + 1013904223) >>> 0;
    return state / 2 ** 32;
  };
}

/**
 * Brute-force pick oracle: perpendicular ray distance via the cross
 * product (a different formula than the implementation's projection
 * residual), same angular gate.
 */
function oraclePick(
  px: number,
  py: number,
  view: ReturnType<typeof defaultViewState>,
  cloud: CloudData,
): number {
  const ray = rayThroughPixel(view, VIEWPORT, px, py);
  const tanPick = Math.tan(pickAngleRad(view));
  let best = -1;
  let bestPerp = Infinity;
  for (let i = 0; i < cloud.count; i++) {
    const w = [
      cloud.positions[3 * i] - ray.origin[0],
      cloud.positions[3 * i + 1] - ray.origin[1],
      cloud.positions[3 * i + 2] - ray.origin[2],
    ];
    const t = w[0] * ray.dir[0] + w[1] * ray.dir[1] + w[2] * ray.dir[2];
    if (t <= 0) continue;
    const cx = w[1] * ray.dir[2] - w[2] * ray.dir[1];
    const cy = w[2] * ray.dir[0] - w[0] * ray.dir[2];
    const cz = w[0] * ray.dir[1] - w[1] * ray.dir[0];
    const perp = Math.hypot(cx, cy, cz); // |w x dir| / |dir|, dir is unit
    if (perp > t * tanPick) continue;
    if (perp < bestPerp) {
      bestPerp = perp;
      best = i;
    }
  }
  return best;
}

describe("pickPoint", () => {
  it("selects a lone point under the cursor", () => {
    const view = defaultViewState();
    const cloud = cloudOf([[0.5, -0.3, 11.0]]);
    const projected = projectPoint(view, VIEWPORT, [0.5, -0.3, 11.0])!;
    const pick = pickPoint(projected.x, projected.y, view, VIEWPORT, cloud, 123);
    expect(pick).not.toBeNull();
    expect(pick!.pointIndex).toBe(0);
    expect(pick!.placedAtMs).toBe(123);
  });

  it("returns null over empty sky", () => {
    const view = defaultViewState();
    const cloud = cloudOf([[0, 0, 12]]);
    expect(pickPoint(5, 5, view, VIEWPORT, cloud)).toBeNull();
  });

  it("matches the brute-force ray-distance oracle on 200 random cursors", () => {
    const rand = lcg(42);
    const view = defaultViewState();
    const cloud = randomCloud(600, rand);
    let hits = 0;
    for (let trial = 0; trial < 200; trial++) {
      let px: number;
      let py: number;
      if (trial % 2 === 0) {
        // aim near a real point so plenty of trials actually pick
        const target = Math.floor(rand() * cloud.count);
        const projected = projectPoint(view, VIEWPORT, [
          cloud.positions[3 * target],
          cloud.positions[3 * target + 1],
          cloud.positions[3 * target + 2],
        ]);
        if (!projected) continue;
        px = projected.x + (rand() - 0.5) * 10;
        py = projected.y + (rand() - 0.5) * 10;
      } else {
        px = rand() * VIEWPORT.width;
        py = rand() * VIEWPORT.height;
      }
      const got = pickPoint(px, py, view, VIEWPORT, cloud);
      const want = oraclePick(px, py, view, cloud);
      expect(got ? got.pointIndex : -1).toBe(want);
      if (want >= 0) hits++;
    }
    expect(hits).toBeGreaterThan(50); // the oracle comparison exercised real picks
  });

  it("returns positions bitwise equal to the cloud points", () => {
    const rand = lcg(7);
    const view = defaultViewState();
    const cloud = randomCloud(100, rand);
    for (let i = 0; i < cloud.count; i++) {
      const projected = projectPoint(view, VIEWPORT, [
        cloud.positions[3 * i],
        cloud.positions[3 * i + 1],
        cloud.positions[3 * i + 2],
      ]);
      if (!projected) continue;
      const pick = pickPoint(projected.x, projected.y, view, VIEWPORT, cloud);
      if (!pick || pick.pointIndex !== i) continue;
      expect(Object.is(pick.position[0], cloud.positions[3 * i])).toBe(true);
      expect(Object.is(pick.position[1], cloud.positions[3 * i + 1])).toBe(true);
      expect(Object.is(pick.position[2], cloud.positions[3 * i + 2])).toBe(true);
    }
  });

  it("prefers the point nearest the ray when several qualify", () => {
    const view = defaultViewState();
    // two points that project close together; the nearer-to-ray one wins
    const cloud = cloudOf([
      [0.0, 0.0, 12.0],
      [0.02, 0.0, 12.0],
    ]);
    const projected = projectPoint(view, VIEWPORT, [0.0, 0.0, 12.0])!;
    const pick = pickPoint(projected.x, projected.y, view, VIEWPORT, cloud);
    expect(pick!.pointIndex).toBe(0);
  });
});
