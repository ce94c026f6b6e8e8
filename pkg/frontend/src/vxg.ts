// VXG1 payload decoding: magic "VXG1", three LE u32 dims, then f32 cells
// in z-fastest order. Mirrors the wire format the service base64-encodes.

export interface VoxelData {
  dims: [number, number, number];
  values: Float32Array; // index = (x * Y + y) * Z + z
}

export function decodeBase64(b64: string): Uint8Array {
  // atob exists in every target runtime (browsers and node >= 16)
  const bin = atob(b64);
  const out = new Uint8Array(bin.length);
  for (let i = 0; i < bin.length; i++) out[i] = bin.charCodeAt(i);
  return out;
}

export function decodeVxg(bytes: Uint8Array): VoxelData {
  if (bytes.length < 16) throw new Error("VXG1 payload too short");
  const magic = String.fromCharCode(...bytes.subarray(0, 4));
  if (magic !== "VXG1") throw new Error(`bad magic ${magic}`);
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  const dims: [number, number, number] = [
    view.getUint32(4, true), view.getUint32(8, true), view.getUint32(12, true),
  ];
  const count = dims[0] * dims[1] * dims[2];
  if (bytes.length !== 16 + 4 * count) {
    throw new Error(`expected ${16 + 4 * count} bytes, got ${bytes.length}`);
  }
  const values = new Float32Array(count);
  for (let i = 0; i < count; i++) values[i] = view.getFloat32(16 + 4 * i, true);
  return { dims, values };
}

export function cellValue(data: VoxelData, x: number, y: number, z: number): number {
  const [, Y, Z] = data.dims;
  return data.values[(x * Y + y) * Z + z];
}
