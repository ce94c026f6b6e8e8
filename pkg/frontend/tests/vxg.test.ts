import { describe, expect, it } from "vitest";

import { cellValue, decodeVxg } from "../src/vxg.js";

function buildVxg(dims: [number, number, number], values: number[]): Uint8Array {
  const count = dims[0] * dims[1] * dims[2];
  const bytes = new Uint8Array(16 + 4 * count);
  bytes.set([0x56, 0x58, 0x47, 0x31]); // "VXG1"
  const view = new DataView(bytes.buffer);
  view.setUint32(4, dims[0], true);
  view.setUint32(8, dims[1], true);
  view.setUint32(12, dims[2], true);
  values.forEach((v, i) => view.setFloat32(16 + 4 * i, v, true));
  return bytes;
}

describe("VXG1 decoding", () => {
  it("round-trips dims and z-fastest cell order", () => {
    const values = Array.from({ length: 2 * 3 * 4 }, (_, i) => i / 24);
    const data = decodeVxg(buildVxg([2, 3, 4], values));
    expect(data.dims).toEqual([2, 3, 4]);
    // index = (x*Y + y)*Z + z
    expect(cellValue(data, 1, 2, 3)).toBeCloseTo(((1 * 3 + 2) * 4 + 3) / 24, 6);
    expect(cellValue(data, 0, 0, 1)).toBeCloseTo(1 / 24, 6);
  });

  it("rejects a bad magic", () => {
    const bytes = buildVxg([1, 1, 1], [0.5]);
    bytes[0] = 0x58;
    expect(() => decodeVxg(bytes)).toThrow(/magic/);
  });

  it("rejects truncated payloads", () => {
    const bytes = buildVxg([2, 2, 2], new Array(8).fill(0.25));
    expect(() => decodeVxg(bytes.subarray(0, 40))).toThrow(/bytes/);
  });
});
