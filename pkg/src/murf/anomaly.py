"""Training-free memory-bank anomaly detection.

One bank of nominal patch features per scale; a query patch scores its L2
distance to the bank's nearest neighbor; per-scale score maps are
upsampled to image resolution and averaged. Nearest-neighbor search is
exact (blocked brute force); optional greedy k-center coresets shrink the
bank deterministically.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .encoder import EncoderSpec, FeatureMap, encode, file_features
from .errors import DataError, ShapeError
from .pyramid import ScaleSet, build_pyramid, resize_bilinear
from .tensorio import (
    DatasetManifest,
    ManifestEntry,
    load_image,
    read_tensor,
    write_tensor,
)

_QUERY_BLOCK = 4096


@dataclass(frozen=True)
class MemoryBank:
    """Immutable nominal-feature bank for one scale."""

    scale: float
    vectors: np.ndarray  # (N, d) float32
    coreset_indices: np.ndarray | None = None  # sorted unique indices into vectors
    normalization: str = "none"  # or "l2"

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def active_vectors(self) -> np.ndarray:
        if self.coreset_indices is None:
            return self.vectors
        return self.vectors[self.coreset_indices]


def _l2_normalize(vectors: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(vectors, axis=-1, keepdims=True)
    return vectors / np.maximum(norms, 1e-12)


def greedy_k_center(vectors: np.ndarray, count: int) -> np.ndarray:
    """Farthest-point subset of ``count`` rows, starting from index 0.

    Each step picks the point with maximal distance to the selected set
    (ties resolved to the lowest index).
    """
    n = vectors.shape[0]
    if not 1 <= count <= n:
        raise DataError(f"coreset size {count} outside [1, {n}]")
    pts = vectors.astype(np.float64)
    selected = [0]
    dists = np.linalg.norm(pts - pts[0], axis=1)
    for _ in range(count - 1):
        nxt = int(np.argmax(dists))
        selected.append(nxt)
        dists = np.minimum(dists, np.linalg.norm(pts - pts[nxt], axis=1))
    return np.sort(np.asarray(selected, dtype=np.intp))


def build_bank(
    feature_maps,
    scale: float,
    coreset_fraction: float = 1.0,
    normalize: bool = False,
) -> MemoryBank:
    """Pool nominal patch vectors into a bank, optionally coreset-subsampled."""
    if not 0.0 < coreset_fraction <= 1.0:
        raise DataError(f"coreset fraction {coreset_fraction} outside (0, 1]")
    pools = []
    dim = None
    for fmap in feature_maps:
        data = fmap.data if isinstance(fmap, FeatureMap) else np.asarray(fmap)
        if dim is None:
            dim = data.shape[-1]
        elif data.shape[-1] != dim:
            raise ShapeError(f"feature dim {data.shape[-1]} != {dim}")
        pools.append(data.reshape(-1, dim).astype(np.float32))
    if not pools:
        raise DataError("no nominal feature maps")
    vectors = np.concatenate(pools)
    if normalize:
        vectors = _l2_normalize(vectors)
    indices = None
    if coreset_fraction < 1.0:
        count = int(np.ceil(coreset_fraction * vectors.shape[0]))
        indices = greedy_k_center(vectors, count)
    return MemoryBank(
        scale=scale,
        vectors=vectors,
        coreset_indices=indices,
        normalization="l2" if normalize else "none",
    )


def score_map(bank: MemoryBank, feats) -> np.ndarray:
    """Per-position L2 distance to the nearest bank vector, at grid resolution."""
    data = feats.data if isinstance(feats, FeatureMap) else np.asarray(feats)
    if data.shape[-1] != bank.dim:
        raise ShapeError(f"query dim {data.shape[-1]} != bank dim {bank.dim}")
    gh, gw = data.shape[:2]
    queries = data.reshape(-1, bank.dim).astype(np.float64)
    if bank.normalization == "l2":
        queries = _l2_normalize(queries)
    refs = bank.active_vectors().astype(np.float64)
    ref_sq = np.sum(refs**2, axis=1)
    out = np.empty(queries.shape[0])
    for start in range(0, queries.shape[0], _QUERY_BLOCK):
        q = queries[start : start + _QUERY_BLOCK]
        d2 = np.sum(q**2, axis=1)[:, None] + ref_sq[None, :] - 2.0 * (q @ refs.T)
        out[start : start + _QUERY_BLOCK] = np.sqrt(np.maximum(d2.min(axis=1), 0.0))
    return out.reshape(gh, gw).astype(np.float32)


def fuse_scores(per_scale, out_h: int, out_w: int) -> np.ndarray:
    """Mean of the per-scale score maps after upsampling to (out_h, out_w)."""
    per_scale = list(per_scale)
    if not per_scale:
        raise DataError("no score maps to fuse")
    acc = np.zeros((out_h, out_w), dtype=np.float64)
    for smap in per_scale:
        acc += resize_bilinear(np.asarray(smap), out_h, out_w)
    return (acc / len(per_scale)).astype(np.float32)


@dataclass(frozen=True)
class AdResult:
    entry: ManifestEntry
    score_map: np.ndarray  # (H, W) fused scores at image resolution
    image_score: float  # max pixel score


def murf_threads() -> int:
    value = os.environ.get("MURF_THREADS", "")
    if value.isdigit() and int(value) >= 1:
        return int(value)
    return os.cpu_count() or 1


def _entry_features(
    manifest: DatasetManifest,
    entry: ManifestEntry,
    scales: ScaleSet,
    spec: EncoderSpec,
):
    """Per-scale FeatureMaps for an entry, plus the source image size."""
    image = load_image(manifest.resolve(entry.image_path))
    if spec.kind == "file":
        fmaps = [
            file_features(manifest, entry, s, layer=spec.layers[-1])
            for s in scales.scales
        ]
    else:
        layer = spec.layers[-1]
        fmaps = [
            encode(EncoderSpec("toy", spec.patch, spec.dim, spec.seed, (layer,)), img)[0]
            for img in build_pyramid(image, scales, spec.patch)
        ]
    return fmaps, image.shape[:2]


def run_ad(
    manifest: DatasetManifest,
    scales: ScaleSet,
    spec: EncoderSpec,
    coreset_fraction: float = 1.0,
    normalize: bool = False,
    smoothing_sigma: float | None = None,
    banks: list[MemoryBank] | None = None,
) -> list[AdResult]:
    """Full pipeline: banks from the train split, fused scores for the test split.

    Prebuilt ``banks`` (one per scale, in scale order) skip the train pass.
    """
    test = manifest.split("test")
    if not test:
        raise DataError("manifest has no test entries to score")

    if banks is None:
        train = manifest.split("train")
        if not train:
            raise DataError("manifest has no train entries to build banks from")
        per_scale_maps: list[list[FeatureMap]] = [[] for _ in scales.scales]
        for entry in train:
            fmaps, _ = _entry_features(manifest, entry, scales, spec)
            for i, fmap in enumerate(fmaps):
                per_scale_maps[i].append(fmap)
        banks = [
            build_bank(maps, scale=s, coreset_fraction=coreset_fraction, normalize=normalize)
            for s, maps in zip(scales.scales, per_scale_maps)
        ]
    elif len(banks) != len(scales.scales):
        raise DataError(f"got {len(banks)} banks for {len(scales.scales)} scales")

    def score_entry(entry: ManifestEntry) -> AdResult:
        fmaps, (h, w) = _entry_features(manifest, entry, scales, spec)
        fused = fuse_scores(
            [score_map(bank, fmap) for bank, fmap in zip(banks, fmaps)], h, w
        )
        if smoothing_sigma:
            fused = gaussian_filter(fused, sigma=smoothing_sigma).astype(np.float32)
        return AdResult(entry=entry, score_map=fused, image_score=float(fused.max()))

    workers = min(murf_threads(), len(test))
    if workers <= 1:
        return [score_entry(e) for e in test]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(score_entry, test))


def save_bank(out_dir: str | Path, bank: MemoryBank) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_tensor(out_dir / "vectors.mrft", bank.vectors)
    lines = [f"scale={bank.scale:g}", f"normalization={bank.normalization}"]
    if bank.coreset_indices is not None:
        lines.append("coreset=" + ",".join(str(int(i)) for i in bank.coreset_indices))
    (out_dir / "bank.txt").write_text("\n".join(lines) + "\n")


def load_bank(out_dir: str | Path) -> MemoryBank:
    out_dir = Path(out_dir)
    meta_path = out_dir / "bank.txt"
    if not meta_path.exists():
        raise DataError(f"missing bank metadata {meta_path}")
    meta = dict(
        line.split("=", 1)
        for line in meta_path.read_text().splitlines()
        if "=" in line
    )
    vectors = read_tensor(out_dir / "vectors.mrft")
    indices = None
    if meta.get("coreset"):
        indices = np.asarray([int(t) for t in meta["coreset"].split(",")], dtype=np.intp)
    return MemoryBank(
        scale=float(meta.get("scale", "1")),
        vectors=vectors,
        coreset_indices=indices,
        normalization=meta.get("normalization", "none"),
    )
