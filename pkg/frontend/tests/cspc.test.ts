import { describe, expect, it } from "vitest";

import { parseCspc, pointAt } from "../src/cspc";

/** Independent little-endian encoder mirroring the backend container. */
function encodeCspc(
  points: number[][],
  intensity: number[] | null,
  frame: 0 | 1 = 1,
  version = 1,
): ArrayBuffer {
  const stride = intensity ? 4 : 3;
  const buffer = new ArrayBuffer(11 + points.length * stride * 4);
  const view = new DataView(buffer);
  view.setUint8(0, "C".charCodeAt(0));
  view.setUint8(1, "S".charCodeAt(0));
  view.setUint8(2, "P".charCodeAt(0));
  view.setUint8(3, "C".charCodeAt(0));
  view.setUint8(4, version);
  view.setUint8(5, frame);
  view.setUint8(6, intensity ? 1 : 0);
  view.setUint32(7, points.length, true);
  let offset = 11;
  points.forEach((p, i) => {
    view.setFloat32(offset, p[0], true);
    view.setFloat32(offset + 4, p[1], true);
    view.setFloat32(offset + 8, p[2], true);
    offset += 12;
    if (intensity) {
      view.setFloat32(offset, intensity[i], true);
      offset += 4;
    }
  });
  return buffer;
}

describe("parseCspc", () => {
  it("decodes points and intensity", () => {
    const buffer = encodeCspc(
      [
        [1.5, -2.25, 10.0],
        [0.1, 0.2, 0.3],
      ],
      [0.25, 0.75],
    );
    const cloud = parseCspc(buffer);
    expect(cloud.count).toBe(2);
    expect(cloud.frame).toBe("camera");
    expect(pointAt(cloud, 0)).toEqual([1.5, -2.25, 10]);
    expect(cloud.intensity![1]).toBeCloseTo(0.75, 6);
  });

  it("keeps positions bitwise equal to the wire values", () => {
    // 0.1 and 0.2 are not exactly representable; the parsed values must
    // be the float32 roundings from the payload, bit for bit.
    const buffer = encodeCspc([[0.1, 0.2, 0.3]], null);
    const cloud = parseCspc(buffer);
    const wire = new Float32Array(buffer.slice(11));
    const parsedBits = new Uint32Array(cloud.positions.buffer, 0, 3);
    const wireBits = new Uint32Array(wire.buffer);
    expect(Array.from(parsedBits)).toEqual(Array.from(wireBits));
  });

  it("decodes intensity-free payloads", () => {
    const cloud = parseCspc(encodeCspc([[1, 2, 3]], null, 0));
    expect(cloud.intensity).toBeNull();
    expect(cloud.frame).toBe("lidar");
  });

  it("rejects bad magic", () => {
    const buffer = encodeCspc([[1, 2, 3]], null);
    new DataView(buffer).setUint8(0, "X".charCodeAt(0));
    expect(() => parseCspc(buffer)).toThrow(/magic/);
  });

  it("rejects truncated payloads", () => {
    const buffer = encodeCspc([[1, 2, 3]], null);
    expect(() => parseCspc(buffer.slice(0, buffer.byteLength - 2))).toThrow(/length/);
  });

  it("rejects unknown versions", () => {
    const buffer = encodeCspc([[1, 2, 3]], null, 1, 9);
    expect(() => parseCspc(buffer)).toThrow(/version/);
  });
});
