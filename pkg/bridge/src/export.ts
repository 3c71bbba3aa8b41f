/**
 * Feature export: run a backbone over every image in a manifest at each
 * configured scale, and write per-layer feature tensors plus `.cls` global
 * token sidecars that the consumer pipeline reads bit-exactly.
 *
 * Output layout under the job's output directory:
 *   features/<stem>_s<scale>_l<layer>.mrft  one tensor per (image, scale, layer)
 *   features/....mrft.cls                   global token sidecar per tensor
 *   manifest.txt                            input manifest + feat:<scale>= keys
 *   export-metadata.json                    backbone id/version, job config
 *
 * The manifest's feat:<scale> value is the layer-less base name; consumers
 * that ask for a layer resolve the `_l<layer>` sibling next to it.
 *
 * All files are written atomically (temp file + rename), and re-running an
 * identical job produces byte-identical outputs.
 */

import { promises as fs } from "node:fs";
import * as path from "node:path";

import type { Backbone, LayerFeatures } from "./backbone.js";
import { scaledSides, resizeBilinear, type ScaleSpec, type Image } from "./geometry.js";
import {
  DataError,
  atomicWrite,
  encodeTensor,
  formatManifest,
  loadImage,
  loadManifest,
  type ManifestEntry,
} from "./tensorio.js";

export interface ExportJob {
  manifestPath: string;
  backbone: Backbone;
  scales: ScaleSpec;
  layers: number[];
  outDir: string;
}

export interface ExportResult {
  manifestPath: string;
  metadataPath: string;
  /** number of feature tensors written (excluding .cls sidecars) */
  filesWritten: number;
}

function stemOf(imagePath: string): string {
  const base = path.basename(imagePath);
  const dot = base.lastIndexOf(".");
  return dot > 0 ? base.slice(0, dot) : base;
}

function gridTensor(feat: LayerFeatures): Buffer {
  return encodeTensor({ dims: [feat.gridH, feat.gridW, feat.dim], data: feat.data });
}

function clsTensor(feat: LayerFeatures): Buffer {
  return encodeTensor({ dims: [feat.dim], data: feat.cls });
}

export async function exportFeatures(job: ExportJob): Promise<ExportResult> {
  const { backbone, scales, outDir } = job;
  if (job.layers.length === 0) throw new DataError("layer list must be non-empty");
  const layers = [...job.layers].sort((a, b) => a - b);
  for (let i = 1; i < layers.length; i++) {
    if (layers[i] === layers[i - 1]) throw new DataError(`duplicate layer ${layers[i]}`);
  }

  const entries = await loadManifest(job.manifestPath);
  const manifestDir = path.dirname(path.resolve(job.manifestPath));
  const featDir = path.join(outDir, "features");
  await fs.mkdir(featDir, { recursive: true });

  let filesWritten = 0;
  const updated: ManifestEntry[] = [];
  const stems = new Set<string>();
  for (const entry of entries) {
    const stem = stemOf(entry.imagePath);
    if (stems.has(stem)) {
      throw new DataError(`duplicate image stem '${stem}' would collide in the output directory`);
    }
    stems.add(stem);
    const imageAbs = path.resolve(manifestDir, entry.imagePath);
    const image: Image = await loadImage(imageAbs);

    const featurePaths = new Map(entry.featurePaths);
    for (const scale of scales.scales) {
      const canon = String(scale);
      const [th, tw] = scaledSides(image.h, image.w, scale, scales.mode, backbone.patch);
      const resized = resizeBilinear(image, th, tw);
      const feats = await backbone.encode(resized, layers);

      // The manifest records the base name; consumers resolve the per-layer
      // sibling `<stem>_s<scale>_l<layer>.mrft`, so only layered files are
      // written: one tensor per (image, scale, layer).
      const baseName = `${stem}_s${canon}.mrft`;
      for (const feat of feats) {
        const layerName = `${stem}_s${canon}_l${feat.layer}.mrft`;
        await atomicWrite(path.join(featDir, layerName), gridTensor(feat));
        await atomicWrite(path.join(featDir, `${layerName}.cls`), clsTensor(feat));
        filesWritten++;
      }
      featurePaths.set(canon, path.posix.join("features", baseName));
    }

    const relImage = path.relative(outDir, imageAbs).split(path.sep).join("/");
    updated.push({ ...entry, imagePath: relImage, featurePaths });
  }

  const manifestPath = path.join(outDir, "manifest.txt");
  await atomicWrite(manifestPath, formatManifest(updated));

  const metadataPath = path.join(outDir, "export-metadata.json");
  const metadata = {
    backbone: backbone.id,
    backbone_version: backbone.version,
    patch: backbone.patch,
    dim: backbone.dim,
    scales: scales.scales,
    scale_mode: scales.mode,
    layers,
    images: updated.length,
  };
  await atomicWrite(metadataPath, JSON.stringify(metadata, null, 2) + "\n");

  return { manifestPath, metadataPath, filesWritten };
}
