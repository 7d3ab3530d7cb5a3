// LUDA1 tensor container: magic "LUDA1", u32 rank, u32 dims[rank],
// u8 dtype tag (f32=0, f64=1, u32=2), little-endian row-major payload.

import { readFileSync, writeFileSync } from "node:fs";
import { CorruptFile } from "./errors.js";

const MAGIC = Buffer.from("LUDA1", "ascii");

export type Dtype = "f32" | "f64" | "u32";
export type TypedData = Float32Array | Float64Array | Uint32Array;

export interface Tensor {
  shape: number[];
  dtype: Dtype;
  data: TypedData;
}

const TAG_OF: Record<Dtype, number> = { f32: 0, f64: 1, u32: 2 };
const DTYPE_OF: Dtype[] = ["f32", "f64", "u32"];

function ctorOf(dtype: Dtype) {
  switch (dtype) {
    case "f32": return Float32Array;
    case "f64": return Float64Array;
    case "u32": return Uint32Array;
  }
}

export function tensor(data: number[] | TypedData, shape: number[],
                       dtype: Dtype = "f64"): Tensor {
  const ctor = ctorOf(dtype);
  const flat = data instanceof ctor ? data : new ctor(data as number[]);
  const count = shape.reduce((a, b) => a * b, 1);
  if (flat.length !== count) {
    throw new CorruptFile(`data length ${flat.length} does not fill shape ${shape}`);
  }
  return { shape: [...shape], dtype, data: flat as TypedData };
}

export function elementCount(t: Tensor): number {
  return t.shape.reduce((a, b) => a * b, 1);
}

export function writeTensor(path: string, t: Tensor): void {
  const header = Buffer.alloc(MAGIC.length + 4 + 4 * t.shape.length + 1);
  MAGIC.copy(header, 0);
  header.writeUInt32LE(t.shape.length, MAGIC.length);
  t.shape.forEach((d, i) => header.writeUInt32LE(d, MAGIC.length + 4 + 4 * i));
  header.writeUInt8(TAG_OF[t.dtype], header.length - 1);
  const payload = Buffer.from(t.data.buffer, t.data.byteOffset, t.data.byteLength);
  writeFileSync(path, Buffer.concat([header, payload]));
}

export function readTensor(path: string): Tensor {
  const blob = readFileSync(path);
  if (blob.length < MAGIC.length + 4 || !blob.subarray(0, MAGIC.length).equals(MAGIC)) {
    throw new CorruptFile(`${path}: bad magic`);
  }
  let off = MAGIC.length;
  const rank = blob.readUInt32LE(off);
  off += 4;
  if (rank > 8 || blob.length < off + 4 * rank + 1) {
    throw new CorruptFile(`${path}: truncated header`);
  }
  const shape: number[] = [];
  for (let i = 0; i < rank; i++) {
    shape.push(blob.readUInt32LE(off));
    off += 4;
  }
  const tag = blob.readUInt8(off);
  off += 1;
  const dtype = DTYPE_OF[tag];
  if (dtype === undefined) {
    throw new CorruptFile(`${path}: unknown dtype tag ${tag}`);
  }
  const ctor = ctorOf(dtype);
  const count = shape.reduce((a, b) => a * b, 1);
  if (blob.length - off !== count * ctor.BYTES_PER_ELEMENT) {
    throw new CorruptFile(`${path}: payload is ${blob.length - off} bytes, ` +
      `expected ${count * ctor.BYTES_PER_ELEMENT}`);
  }
  const payload = blob.subarray(off);
  const copy = Buffer.alloc(payload.length);
  payload.copy(copy);
  const data = new ctor(copy.buffer, copy.byteOffset, count) as TypedData;
  return { shape, dtype, data };
}
