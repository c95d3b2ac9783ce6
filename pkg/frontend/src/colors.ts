import { CloudData, ColorMode } from "./types";

/**
 * Point colors substitute intensity or height for camera colorization.
 * Height uses the y-down camera convention: smaller y is higher up.
 */

export function colorScale(t: number): [number, number, number] {
  const clamped = Math.min(1, Math.max(0, t));
  // cold-to-warm ramp
  return [Math.round(40 + 215 * clamped), Math.round(70 + 80 * (1 - Math.abs(clamped - 0.5) * 2)), Math.round(255 - 215 * clamped)];
}

export function pointColors(cloud: CloudData, mode: ColorMode): Uint8Array {
  const out = new Uint8Array(cloud.count * 3);
  let values: (i: number) => number;
  if (mode === "intensity" && cloud.intensity) {
    const inten = cloud.intensity;
    values = (i) => inten[i];
  } else {
    let min = Infinity;
    let max = -Infinity;
    for (let i = 0; i < cloud.count; i++) {
      const y = cloud.positions[3 * i + 1];
      if (y < min) min = y;
      if (y > max) max = y;
    }
    const span = max - min || 1;
    // invert so higher points (smaller y) come out warmer
    values = (i) => 1 - (cloud.positions[3 * i + 1] - min) / span;
  }
  for (let i = 0; i < cloud.count; i++) {
    const [r, g, b] = colorScale(values(i));
    out[3 * i] = r;
    out[3 * i + 1] = g;
    out[3 * i + 2] = b;
  }
  return out;
}
