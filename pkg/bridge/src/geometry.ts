/**
 * Side snapping and corner-aligned bilinear resizing, matching the consumer
 * pipeline's conventions exactly: sides snap to the nearest patch multiple
 * (round half up, at least one patch), and resampling aligns corner pixels.
 */

import { DataError } from "./tensorio.js";

export interface Image {
  h: number;
  w: number;
  c: number;
  data: Float32Array; // row-major (h, w, c)
}

/** Nearest multiple of `patch` to `target`, rounding half up; >= 1 patch. */
export function snapSide(target: number, patch: number): number {
  if (patch < 1) throw new DataError(`patch size ${patch} must be >= 1`);
  const m = Math.floor(target / patch + 0.5);
  if (m < 1) {
    throw new DataError(`target side ${target} snaps to zero patches of ${patch}`);
  }
  return m * patch;
}

export interface ScaleSpec {
  scales: number[];
  mode: "relative_factor" | "absolute_side";
}

export function parseScales(text: string, mode: ScaleSpec["mode"] = "relative_factor"): ScaleSpec {
  const scales = text.split(",").map((s) => {
    const v = Number(s);
    if (!Number.isFinite(v) || v <= 0) throw new DataError(`bad scale '${s}'`);
    return v;
  });
  for (let i = 1; i < scales.length; i++) {
    if (scales[i] <= scales[i - 1]) throw new DataError("scales must be strictly increasing");
  }
  return { scales, mode };
}

/** Target (height, width) for one scale, after snapping to patch multiples. */
export function scaledSides(
  h: number,
  w: number,
  scale: number,
  mode: ScaleSpec["mode"],
  patch: number,
): [number, number] {
  if (mode === "absolute_side") {
    const side = snapSide(scale, patch);
    return [side, side];
  }
  return [snapSide(h * scale, patch), snapSide(w * scale, patch)];
}

/** Corner-aligned bilinear resize of an (h, w, c) image. */
export function resizeBilinear(src: Image, outH: number, outW: number): Image {
  if (outH === src.h && outW === src.w) {
    return { h: src.h, w: src.w, c: src.c, data: src.data.slice() };
  }
  const { h, w, c, data } = src;
  const out = new Float32Array(outH * outW * c);
  const scaleY = outH > 1 ? (h - 1) / (outH - 1) : 0;
  const scaleX = outW > 1 ? (w - 1) / (outW - 1) : 0;
  for (let i = 0; i < outH; i++) {
    const sy = i * scaleY;
    const y0 = Math.min(Math.floor(sy), h - 1);
    const y1 = Math.min(y0 + 1, h - 1);
    const fy = sy - y0;
    for (let j = 0; j < outW; j++) {
      const sx = j * scaleX;
      const x0 = Math.min(Math.floor(sx), w - 1);
      const x1 = Math.min(x0 + 1, w - 1);
      const fx = sx - x0;
      for (let k = 0; k < c; k++) {
        const a = data[(y0 * w + x0) * c + k];
        const b = data[(y0 * w + x1) * c + k];
        const d = data[(y1 * w + x0) * c + k];
        const e = data[(y1 * w + x1) * c + k];
        const top = a * (1 - fx) + b * fx;
        const bottom = d * (1 - fx) + e * fx;
        out[(i * outW + j) * c + k] = Math.fround(top * (1 - fy) + bottom * fy);
      }
    }
  }
  return { h: outH, w: outW, c, data: out };
}
