"""Frozen patch-feature encoders.

Two implementations share one interface: a deterministic toy encoder whose
features are a seeded linear projection of raw patch pixels (so every test
has a closed-form oracle), and a file-backed encoder that reads
precomputed feature tensors exported by an external backbone.

Toy encoder computation, fixed so independent implementations agree:

1. For patch (u, v), ``r`` is the patch's ``patch * patch * C`` pixel
   values in row-major order.
2. Layer-0 feature ``k`` is ``sum_j r[j] * B(k, j)`` where
   ``B(k, j) = 2 * splitmix64(seed XOR (k * 1000003 + j)) / 2**64 - 1``.
3. Layer ``l >= 1`` applies ``l`` rounds of 3x3 mean mixing over the patch
   grid with edge clamping.
4. The global token is the grid mean of the layer's features.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, ShapeError
from .tensorio import DatasetManifest, ManifestEntry, read_tensor

_U64 = np.uint64
_GOLDEN = _U64(0x9E3779B97F4B7C15)
_MIX1 = _U64(0xBF58476D1CE4E5B9)
_MIX2 = _U64(0x94D049BB133111EB)


def splitmix64(x) -> np.ndarray:
    """The splitmix64 mix function applied to ``x`` (scalar or uint64 array)."""
    with np.errstate(over="ignore"):
        z = np.asarray(x, dtype=np.uint64) + _GOLDEN
        z = (z ^ (z >> _U64(30))) * _MIX1
        z = (z ^ (z >> _U64(27))) * _MIX2
        return z ^ (z >> _U64(31))


@dataclass(frozen=True)
class FeatureMap:
    """A (grid_h, grid_w, dim) patch-feature grid with an optional global token."""

    data: np.ndarray
    layer_id: int = 0
    global_token: np.ndarray | None = None

    def __post_init__(self):
        if self.data.ndim != 3:
            raise ShapeError(f"feature map must be 3-D, got shape {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise DataError("feature map contains non-finite values")
        if self.global_token is not None and self.global_token.shape != (self.dim,):
            raise ShapeError(
                f"global token shape {self.global_token.shape} != ({self.dim},)"
            )

    @property
    def grid_h(self) -> int:
        return self.data.shape[0]

    @property
    def grid_w(self) -> int:
        return self.data.shape[1]

    @property
    def dim(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class EncoderSpec:
    """Which encoder to run: toy (seeded) or file (precomputed features)."""

    kind: str  # "toy" or "file"
    patch: int
    dim: int
    seed: int = 0
    layers: tuple[int, ...] = (0,)

    def __post_init__(self):
        if self.kind not in ("toy", "file"):
            raise DataError(f"unknown encoder kind {self.kind!r}")
        if self.patch < 1 or self.dim < 1:
            raise DataError("patch and dim must be >= 1")
        if len(self.layers) == 0:
            raise DataError("layer list must be non-empty")
        if any(b <= a for a, b in zip(self.layers, self.layers[1:])):
            raise DataError("layers must be strictly increasing")
        if any(l < 0 for l in self.layers):
            raise DataError("layer ids must be >= 0")


def projection_matrix(seed: int, dim: int, n_in: int) -> np.ndarray:
    """The toy encoder's (dim, n_in) projection, entries in [-1, 1]."""
    k = np.arange(dim, dtype=np.uint64)[:, None]
    j = np.arange(n_in, dtype=np.uint64)[None, :]
    with np.errstate(over="ignore"):
        state = np.uint64(seed) ^ (k * np.uint64(1000003) + j)
    return (2.0 * (splitmix64(state) / 2.0**64) - 1.0).astype(np.float64)


def _mean3x3(grid: np.ndarray) -> np.ndarray:
    padded = np.pad(grid, ((1, 1), (1, 1), (0, 0)), mode="edge")
    acc = np.zeros_like(grid, dtype=np.float64)
    h, w = grid.shape[:2]
    for dy in range(3):
        for dx in range(3):
            acc += padded[dy : dy + h, dx : dx + w]
    return acc / 9.0


def toy_features(image, patch: int, dim: int, seed: int, layer: int) -> FeatureMap:
    """Run the toy encoder at a single layer."""
    base = _toy_base(image, patch, dim, seed)
    grid = base
    for _ in range(layer):
        grid = _mean3x3(grid)
    return _finish_layer(grid, layer)


def _toy_base(image, patch: int, dim: int, seed: int) -> np.ndarray:
    image = np.asarray(image)
    if image.ndim != 3:
        raise ShapeError(f"expected (H, W, C) image, got shape {image.shape}")
    h, w, c = image.shape
    if h % patch or w % patch:
        raise ShapeError(f"image sides {h}x{w} not divisible by patch {patch}")
    gh, gw = h // patch, w // patch
    raw = (
        image.astype(np.float64)
        .reshape(gh, patch, gw, patch, c)
        .transpose(0, 2, 1, 3, 4)
        .reshape(gh, gw, patch * patch * c)
    )
    return raw @ projection_matrix(seed, dim, patch * patch * c).T


def _finish_layer(grid: np.ndarray, layer: int) -> FeatureMap:
    data = grid.astype(np.float32)
    token = grid.mean(axis=(0, 1)).astype(np.float32)
    return FeatureMap(data=data, layer_id=layer, global_token=token)


def encode(spec: EncoderSpec, image) -> list[FeatureMap]:
    """Encode an image, returning one FeatureMap per requested layer."""
    if spec.kind != "toy":
        raise DataError("encode() runs the toy encoder; use file_features for kind='file'")
    grid = _toy_base(image, spec.patch, spec.dim, spec.seed)
    out = []
    rounds = 0
    for layer in spec.layers:
        while rounds < layer:
            grid = _mean3x3(grid)
            rounds += 1
        out.append(_finish_layer(grid, layer))
    return out


def layered_feature_path(path: str, layer: int) -> str:
    """Per-layer sibling of a manifest feature path: stem_l<layer><ext>."""
    if "." in path.rsplit("/", 1)[-1]:
        stem, ext = path.rsplit(".", 1)
        return f"{stem}_l{layer}.{ext}"
    return f"{path}_l{layer}"


def file_features(
    manifest: DatasetManifest,
    entry: ManifestEntry,
    scale: float,
    layer: int | None = None,
) -> FeatureMap:
    """Read a precomputed FeatureMap for one (entry, scale).

    With a ``layer`` given, a per-layer sibling file is preferred when it
    exists; otherwise the entry's plain feature path is read. A sibling
    ``<path>.cls`` tensor, when present, supplies the global token.
    """
    if scale not in entry.feature_paths:
        raise DataError(f"{entry.image_path}: no feature path for scale {scale:g}")
    relpath = entry.feature_paths[scale]
    if layer is not None:
        layered = layered_feature_path(relpath, layer)
        if manifest.resolve(layered).exists():
            relpath = layered
    path = manifest.resolve(relpath)
    if not path.exists():
        raise DataError(f"missing feature file {path}")
    data = read_tensor(path)
    if data.ndim != 3:
        raise ShapeError(f"{path}: feature tensor must be 3-D, got {data.ndim}-D")
    token = None
    cls_path = path.with_name(path.name + ".cls")
    if cls_path.exists():
        token = read_tensor(cls_path)
        if token.shape != (data.shape[2],):
            raise ShapeError(
                f"{cls_path}: token shape {token.shape} != ({data.shape[2]},)"
            )
    return FeatureMap(data=data, layer_id=-1 if layer is None else layer, global_token=token)
