"""Fusing per-scale feature maps into one representation.

Each per-scale map is bilinearly resampled to a common grid and the maps
are concatenated along channels, ordered by ascending scale. Multi-layer
concatenation (at one scale) and PCA visualization live here too.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .encoder import FeatureMap
from .errors import DataError, DegenerateFeaturesError, ShapeError
from .pyramid import resize_bilinear
from .tensorio import read_tensor, write_tensor


@dataclass(frozen=True)
class ScaleBlock:
    scale: float
    dim: int
    offset: int


@dataclass(frozen=True)
class FusedFeatureMap:
    """(grid_h, grid_w, total_dim) fused features with per-scale channel blocks."""

    data: np.ndarray
    blocks: tuple[ScaleBlock, ...]
    global_tokens: tuple[tuple[float, np.ndarray], ...] = ()

    @property
    def grid_h(self) -> int:
        return self.data.shape[0]

    @property
    def grid_w(self) -> int:
        return self.data.shape[1]

    @property
    def total_dim(self) -> int:
        return self.data.shape[2]

    def block_slice(self, scale: float) -> np.ndarray:
        for b in self.blocks:
            if b.scale == scale:
                return self.data[:, :, b.offset : b.offset + b.dim]
        raise DataError(f"no channel block for scale {scale:g}")

    def layout(self) -> str:
        return ";".join(f"{b.scale:g}:{b.dim}:{b.offset}" for b in self.blocks)


def fuse(
    maps,
    target_h: int | None = None,
    target_w: int | None = None,
) -> FusedFeatureMap:
    """Fuse (scale, FeatureMap) pairs; target grid defaults to the largest input grid."""
    maps = list(maps)
    if not maps:
        raise DataError("nothing to fuse")
    scales = [s for s, _ in maps]
    if len(set(scales)) != len(scales):
        raise DataError(f"duplicate scales in {scales}")
    maps.sort(key=lambda p: p[0])
    if target_h is None:
        target_h = max(m.grid_h for _, m in maps)
    if target_w is None:
        target_w = max(m.grid_w for _, m in maps)

    blocks = []
    parts = []
    tokens = []
    offset = 0
    for scale, fmap in maps:
        if (fmap.grid_h, fmap.grid_w) == (target_h, target_w):
            parts.append(fmap.data.astype(np.float32, copy=False))
        else:
            parts.append(resize_bilinear(fmap.data, target_h, target_w))
        blocks.append(ScaleBlock(scale=scale, dim=fmap.dim, offset=offset))
        offset += fmap.dim
        if fmap.global_token is not None:
            tokens.append((scale, fmap.global_token))
    return FusedFeatureMap(
        data=np.concatenate(parts, axis=2),
        blocks=tuple(blocks),
        global_tokens=tuple(tokens),
    )


def concat_layers(per_layer) -> FeatureMap:
    """Concatenate same-grid FeatureMaps from several layers along channels."""
    fmaps = sorted(per_layer, key=lambda m: m.layer_id)
    if not fmaps:
        raise DataError("nothing to concatenate")
    grid = (fmaps[0].grid_h, fmaps[0].grid_w)
    for m in fmaps[1:]:
        if (m.grid_h, m.grid_w) != grid:
            raise ShapeError(
                f"layer grids differ: {grid} vs {(m.grid_h, m.grid_w)}"
            )
    if len(fmaps) == 1:
        return fmaps[0]
    data = np.concatenate([m.data for m in fmaps], axis=2)
    token = None
    if all(m.global_token is not None for m in fmaps):
        token = np.concatenate([m.global_token for m in fmaps])
    return FeatureMap(data=data, layer_id=-1, global_token=token)


def pca_project(features, components: int = 3, foreground_mask=None) -> np.ndarray:
    """Project features onto their top principal directions for visualization.

    Returns a (grid_h, grid_w, components) float32 array with each
    component min-max normalized to [0, 1]; masked-out positions are 0.
    """
    if isinstance(features, (FusedFeatureMap, FeatureMap)):
        grid = features.data
    else:
        grid = np.asarray(features)
    if grid.ndim != 3:
        raise ShapeError(f"expected (H, W, D) features, got shape {grid.shape}")
    h, w, d = grid.shape
    if components > d:
        raise DataError(f"components {components} exceeds feature dim {d}")

    flat = grid.reshape(h * w, d).astype(np.float64)
    if foreground_mask is not None:
        mask = np.asarray(foreground_mask, dtype=bool).reshape(h * w)
        if int(mask.sum()) < components:
            raise DataError("fewer masked-in positions than requested components")
        sel = flat[mask]
    else:
        mask = None
        sel = flat

    centered = sel - sel.mean(axis=0)
    if not np.any(np.abs(centered) > 1e-12):
        raise DegenerateFeaturesError("features are identical; nothing to decompose")
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    scores = centered @ vt[:components].T

    out = np.zeros((h * w, components), dtype=np.float32)
    for c in range(components):
        col = scores[:, c]
        lo, hi = col.min(), col.max()
        norm = (col - lo) / (hi - lo) if hi > lo else np.zeros_like(col)
        if mask is None:
            out[:, c] = norm
        else:
            out[mask, c] = norm
    return out.reshape(h, w, components)


def save_fused(path: str | Path, fused: FusedFeatureMap) -> None:
    """Write fused features as a tensor plus a ``.blocks`` sidecar header."""
    path = Path(path)
    write_tensor(path, fused.data)
    lines = [f"scale={b.scale:g} dim={b.dim} offset={b.offset}" for b in fused.blocks]
    path.with_name(path.name + ".blocks").write_text("\n".join(lines) + "\n")
    if fused.global_tokens and len(fused.global_tokens) == len(fused.blocks):
        tokens = np.stack([t for _, t in fused.global_tokens])
        write_tensor(path.with_name(path.name + ".cls"), tokens)


def load_fused(path: str | Path) -> FusedFeatureMap:
    path = Path(path)
    data = read_tensor(path)
    if data.ndim != 3:
        raise ShapeError(f"{path}: fused tensor must be 3-D")
    sidecar = path.with_name(path.name + ".blocks")
    if not sidecar.exists():
        raise DataError(f"missing sidecar {sidecar}")
    blocks = []
    for lineno, line in enumerate(sidecar.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            kv = dict(tok.split("=", 1) for tok in line.split())
            blocks.append(
                ScaleBlock(float(kv["scale"]), int(kv["dim"]), int(kv["offset"]))
            )
        except (KeyError, ValueError):
            raise DataError(f"{sidecar}: bad block on line {lineno}") from None
    if sum(b.dim for b in blocks) != data.shape[2]:
        raise ShapeError(f"{path}: block dims do not sum to channel count")
    tokens = ()
    cls_path = path.with_name(path.name + ".cls")
    if cls_path.exists():
        stacked = read_tensor(cls_path)
        tokens = tuple((b.scale, stacked[i]) for i, b in enumerate(blocks))
    return FusedFeatureMap(data=data, blocks=tuple(blocks), global_tokens=tokens)
