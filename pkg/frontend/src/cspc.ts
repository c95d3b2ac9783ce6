import { CloudData } from "./types";

const MAGIC = "CSPC";
const HEADER_BYTES = 4 + 1 + 1 + 1 + 4;

/**
 * Parse the CSPC binary container served by the annotation backend.
 *
 * Layout: "CSPC", version byte, frame byte (0 lidar / 1 camera), flags
 * byte (bit 0: intensity present), uint32 LE point count, float32 LE
 * records. Positions are returned as the raw float32 values so click
 * positions can be submitted bitwise-identical to the payload.
 */
export function parseCspc(buffer: ArrayBuffer): CloudData {
  const view = new DataView(buffer);
  if (buffer.byteLength < HEADER_BYTES) {
    throw new Error("CSPC payload truncated");
  }
  const magic = String.fromCharCode(
    view.getUint8(0),
    view.getUint8(1),
    view.getUint8(2),
    view.getUint8(3),
  );
  if (magic !== MAGIC) {
    throw new Error(`bad CSPC magic ${JSON.stringify(magic)}`);
  }
  const version = view.getUint8(4);
  if (version !== 1) {
    throw new Error(`unsupported CSPC version ${version}`);
  }
  const frameCode = view.getUint8(5);
  if (frameCode !== 0 && frameCode !== 1) {
    throw new Error(`unknown frame code ${frameCode}`);
  }
  const hasIntensity = (view.getUint8(6) & 1) === 1;
  const count = view.getUint32(7, true);
  const stride = hasIntensity ? 4 : 3;
  const expected = HEADER_BYTES + count * stride * 4;
  if (buffer.byteLength !== expected) {
    throw new Error(`CSPC length ${buffer.byteLength}, expected ${expected}`);
  }

  // the 11-byte header leaves the payload unaligned; slice() re-aligns it
  const records = new Float32Array(buffer.slice(HEADER_BYTES));
  let positions: Float32Array;
  let intensity: Float32Array | null = null;
  if (hasIntensity) {
    positions = new Float32Array(count * 3);
    intensity = new Float32Array(count);
    for (let i = 0; i < count; i++) {
      positions[3 * i] = records[stride * i];
      positions[3 * i + 1] = records[stride * i + 1];
      positions[3 * i + 2] = records[stride * i + 2];
      intensity[i] = records[stride * i + 3];
    }
  } else {
    positions = records.slice();
  }
  return {
    count,
    positions,
    intensity,
    frame: frameCode === 0 ? "lidar" : "camera",
  };
}

/** The exact stored point, as float32 values. */
export function pointAt(cloud: CloudData, index: number): [number, number, number] {
  return [
    cloud.positions[3 * index],
    cloud.positions[3 * index + 1],
    cloud.positions[3 * index + 2],
  ];
}
