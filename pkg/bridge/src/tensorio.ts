/**
 * Binary tensor files and dataset manifests, bit-compatible with the Python
 * pipeline that consumes the exported features.
 *
 * Tensor layout: magic "MRFT", u32 version (1), u8 dtype code (0 = float32),
 * u8 ndim, ndim little-endian u64 dims, row-major little-endian float32
 * payload, no padding.
 */

import { promises as fs } from "node:fs";
import { randomBytes } from "node:crypto";
import * as path from "node:path";

export class DataError extends Error {}
export class BadMagicError extends DataError {}
export class UnsupportedFormatError extends DataError {}
export class TruncatedFileError extends DataError {}
export class ManifestError extends DataError {}

const MAGIC = Buffer.from("MRFT", "ascii");
const VERSION = 1;
const DTYPE_FLOAT32 = 0;

export interface Tensor {
  dims: number[];
  data: Float32Array;
}

export function encodeTensor(tensor: Tensor): Buffer {
  const { dims, data } = tensor;
  const count = dims.reduce((a, b) => a * b, 1);
  if (count !== data.length) {
    throw new DataError(`dims ${JSON.stringify(dims)} do not match ${data.length} values`);
  }
  const header = Buffer.alloc(4 + 4 + 1 + 1 + 8 * dims.length);
  MAGIC.copy(header, 0);
  header.writeUInt32LE(VERSION, 4);
  header.writeUInt8(DTYPE_FLOAT32, 8);
  header.writeUInt8(dims.length, 9);
  dims.forEach((dim, i) => {
    if (!Number.isInteger(dim) || dim < 0) {
      throw new DataError(`bad dimension ${dim}`);
    }
    header.writeBigUInt64LE(BigInt(dim), 10 + 8 * i);
  });
  const payload = Buffer.alloc(4 * count);
  for (let i = 0; i < count; i++) {
    payload.writeFloatLE(data[i], 4 * i);
  }
  return Buffer.concat([header, payload]);
}

export function decodeTensor(buf: Buffer, source = "<buffer>"): Tensor {
  if (buf.length < 10) {
    throw new TruncatedFileError(`${source}: ${buf.length} bytes is too short for a header`);
  }
  if (!buf.subarray(0, 4).equals(MAGIC)) {
    throw new BadMagicError(`${source}: bad magic ${JSON.stringify(buf.subarray(0, 4).toString("latin1"))}`);
  }
  const version = buf.readUInt32LE(4);
  if (version !== VERSION) {
    throw new UnsupportedFormatError(`${source}: unsupported version ${version}`);
  }
  const dtype = buf.readUInt8(8);
  if (dtype !== DTYPE_FLOAT32) {
    throw new UnsupportedFormatError(`${source}: unsupported dtype code ${dtype}`);
  }
  const ndim = buf.readUInt8(9);
  if (buf.length < 10 + 8 * ndim) {
    throw new TruncatedFileError(`${source}: header truncated`);
  }
  const dims: number[] = [];
  let count = 1;
  for (let i = 0; i < ndim; i++) {
    const dim = Number(buf.readBigUInt64LE(10 + 8 * i));
    dims.push(dim);
    count *= dim;
  }
  const expected = 10 + 8 * ndim + 4 * count;
  if (buf.length !== expected) {
    throw new TruncatedFileError(`${source}: expected ${expected} bytes, got ${buf.length}`);
  }
  const data = new Float32Array(count);
  const base = 10 + 8 * ndim;
  for (let i = 0; i < count; i++) {
    data[i] = buf.readFloatLE(base + 4 * i);
  }
  return { dims, data };
}

/** Write a file atomically: temp file in the same directory, then rename. */
export async function atomicWrite(filePath: string, content: Buffer | string): Promise<void> {
  const dir = path.dirname(filePath);
  await fs.mkdir(dir, { recursive: true });
  const tmp = path.join(dir, `.${path.basename(filePath)}.${randomBytes(6).toString("hex")}.tmp`);
  await fs.writeFile(tmp, content);
  await fs.rename(tmp, filePath);
}

export async function writeTensor(filePath: string, tensor: Tensor): Promise<void> {
  await atomicWrite(filePath, encodeTensor(tensor));
}

export async function readTensor(filePath: string): Promise<Tensor> {
  return decodeTensor(await fs.readFile(filePath), filePath);
}

export interface ManifestEntry {
  imagePath: string;
  split: "train" | "test";
  label?: number;
  maskPath?: string;
  /** keyed by the scale's canonical string form, e.g. "0.5" */
  featurePaths: Map<string, string>;
}

export function parseManifest(text: string): ManifestEntry[] {
  const entries: ManifestEntry[] = [];
  const lines = text.split("\n");
  for (let i = 0; i < lines.length; i++) {
    const line = lines[i].split("#", 1)[0].trim();
    if (!line) continue;
    const lineno = i + 1;
    const fields = new Map<string, string>();
    const feats = new Map<string, string>();
    for (const token of line.split(/\s+/)) {
      const eq = token.indexOf("=");
      if (eq < 0) throw new ManifestError(`line ${lineno}: token '${token}' is not key=value`);
      const key = token.slice(0, eq);
      const value = token.slice(eq + 1);
      if (key.startsWith("feat:")) {
        const scale = Number(key.slice(5));
        if (!Number.isFinite(scale)) {
          throw new ManifestError(`line ${lineno}: bad feature scale in '${key}'`);
        }
        const canonical = String(scale);
        if (feats.has(canonical)) {
          throw new ManifestError(`line ${lineno}: duplicate feature scale ${canonical}`);
        }
        feats.set(canonical, value);
      } else if (["image", "split", "label", "mask"].includes(key)) {
        if (fields.has(key)) throw new ManifestError(`line ${lineno}: duplicate key '${key}'`);
        fields.set(key, value);
      } else {
        throw new ManifestError(`line ${lineno}: unknown key '${key}'`);
      }
    }
    const imagePath = fields.get("image");
    const split = fields.get("split");
    if (!imagePath) throw new ManifestError(`line ${lineno}: missing required key 'image'`);
    if (split !== "train" && split !== "test") {
      throw new ManifestError(`line ${lineno}: unknown split '${split}'`);
    }
    const entry: ManifestEntry = { imagePath, split, featurePaths: feats };
    const label = fields.get("label");
    if (label !== undefined) {
      if (!/^-?\d+$/.test(label)) {
        throw new ManifestError(`line ${lineno}: label '${label}' is not an integer`);
      }
      entry.label = Number(label);
    }
    const mask = fields.get("mask");
    if (mask !== undefined) entry.maskPath = mask;
    entries.push(entry);
  }
  return entries;
}

export function formatEntry(entry: ManifestEntry): string {
  const parts = [`image=${entry.imagePath}`, `split=${entry.split}`];
  if (entry.label !== undefined) parts.push(`label=${entry.label}`);
  if (entry.maskPath !== undefined) parts.push(`mask=${entry.maskPath}`);
  const scales = [...entry.featurePaths.keys()].sort((a, b) => Number(a) - Number(b));
  for (const scale of scales) {
    parts.push(`feat:${scale}=${entry.featurePaths.get(scale)}`);
  }
  return parts.join(" ");
}

export function formatManifest(entries: ManifestEntry[]): string {
  return entries.map(formatEntry).join("\n") + "\n";
}

export async function loadManifest(filePath: string): Promise<ManifestEntry[]> {
  return parseManifest(await fs.readFile(filePath, "utf-8"));
}

/** Load an image tensor as (h, w, c) float32 in [0, 1]. Only .mrft inputs. */
export async function loadImage(filePath: string): Promise<{ h: number; w: number; c: number; data: Float32Array }> {
  if (!filePath.endsWith(".mrft")) {
    throw new DataError(`${filePath}: only .mrft image tensors are supported`);
  }
  const tensor = await readTensor(filePath);
  if (tensor.dims.length === 2) {
    return { h: tensor.dims[0], w: tensor.dims[1], c: 1, data: tensor.data };
  }
  if (tensor.dims.length !== 3) {
    throw new DataError(`${filePath}: image tensor must be 2-D or 3-D, got ${tensor.dims.length}-D`);
  }
  return { h: tensor.dims[0], w: tensor.dims[1], c: tensor.dims[2], data: tensor.data };
}
