"""Binary tensor files and line-oriented dataset manifests.

Tensor file layout (all integers little-endian, no padding):

    magic      4 bytes  b"MRFT"
    version    u32      currently 1
    dtype_code u8       0 = float32 (the only code in version 1)
    ndim       u8
    dims       ndim x u64
    payload    row-major little-endian float32 scalars

Manifest line format (``#`` starts a comment, blank lines ignored)::

    image=<path> split=<train|test> [label=<int>] [mask=<path>] [feat:<scale>=<path>]*

All paths are relative to the manifest's directory.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BadMagicError,
    DataError,
    ManifestError,
    TruncatedFileError,
    UnsupportedFormatError,
)

MAGIC = b"MRFT"
VERSION = 1
DTYPE_FLOAT32 = 0


def write_tensor(path: str | Path, tensor) -> None:
    """Write a float tensor to ``path`` in the MRFT format."""
    arr = np.ascontiguousarray(tensor, dtype="<f4")
    if arr.size == 0:
        raise DataError(f"refusing to write empty tensor of shape {arr.shape}")
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if math.prod(arr.shape) >= 2**64:
        raise DataError("dims product overflows 64 bits")
    header = MAGIC + struct.pack("<IBB", VERSION, DTYPE_FLOAT32, arr.ndim)
    header += struct.pack(f"<{arr.ndim}Q", *arr.shape)
    with open(path, "wb") as f:
        f.write(header)
        f.write(arr.tobytes())


def read_tensor(path: str | Path) -> np.ndarray:
    """Read an MRFT tensor file, returning a float32 array."""
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 10:
        raise TruncatedFileError(f"{path}: file too short for a header ({len(blob)} bytes)")
    if blob[:4] != MAGIC:
        raise BadMagicError(f"{path}: bad magic {blob[:4]!r}, expected {MAGIC!r}")
    version, dtype_code, ndim = struct.unpack_from("<IBB", blob, 4)
    if version != VERSION:
        raise UnsupportedFormatError(f"{path}: unsupported version {version}")
    if dtype_code != DTYPE_FLOAT32:
        raise UnsupportedFormatError(f"{path}: unsupported dtype code {dtype_code}")
    dims_end = 10 + 8 * ndim
    if len(blob) < dims_end:
        raise TruncatedFileError(f"{path}: truncated dims block")
    dims = struct.unpack_from(f"<{ndim}Q", blob, 10)
    count = math.prod(dims)
    expected = dims_end + 4 * count
    if len(blob) != expected:
        raise TruncatedFileError(
            f"{path}: payload is {len(blob) - dims_end} bytes, expected {4 * count}"
        )
    data = np.frombuffer(blob, dtype="<f4", count=count, offset=dims_end)
    return data.reshape(dims).astype(np.float32)


@dataclass(frozen=True)
class ManifestEntry:
    image_path: str
    split: str
    label: int | None = None
    mask_path: str | None = None
    feature_paths: dict[float, str] = field(default_factory=dict)


@dataclass(frozen=True)
class DatasetManifest:
    root: Path
    entries: tuple[ManifestEntry, ...]

    def split(self, name: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == name]

    def resolve(self, relpath: str) -> Path:
        return self.root / relpath


def load_manifest(path: str | Path) -> DatasetManifest:
    path = Path(path)
    entries = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            entries.append(_parse_entry(line, lineno))
    return DatasetManifest(root=path.parent, entries=tuple(entries))


def _parse_entry(line: str, lineno: int) -> ManifestEntry:
    fields: dict[str, str] = {}
    feats: dict[float, str] = {}
    for token in line.split():
        if "=" not in token:
            raise ManifestError(f"line {lineno}: token {token!r} is not key=value")
        key, value = token.split("=", 1)
        if key.startswith("feat:"):
            try:
                scale = float(key[5:])
            except ValueError:
                raise ManifestError(f"line {lineno}: bad feature scale in {key!r}") from None
            if scale in feats:
                raise ManifestError(f"line {lineno}: duplicate feature scale {scale}")
            feats[scale] = value
        elif key in ("image", "split", "label", "mask"):
            if key in fields:
                raise ManifestError(f"line {lineno}: duplicate key {key!r}")
            fields[key] = value
        else:
            raise ManifestError(f"line {lineno}: unknown key {key!r}")
    if "image" not in fields:
        raise ManifestError(f"line {lineno}: missing required key 'image'")
    if "split" not in fields:
        raise ManifestError(f"line {lineno}: missing required key 'split'")
    split = fields["split"]
    if split not in ("train", "test"):
        raise ManifestError(f"line {lineno}: unknown split {split!r}")
    label = None
    if "label" in fields:
        try:
            label = int(fields["label"])
        except ValueError:
            raise ManifestError(f"line {lineno}: label {fields['label']!r} is not an integer") from None
    return ManifestEntry(
        image_path=fields["image"],
        split=split,
        label=label,
        mask_path=fields.get("mask"),
        feature_paths=feats,
    )


def format_entry(entry: ManifestEntry) -> str:
    parts = [f"image={entry.image_path}", f"split={entry.split}"]
    if entry.label is not None:
        parts.append(f"label={entry.label}")
    if entry.mask_path is not None:
        parts.append(f"mask={entry.mask_path}")
    for scale in sorted(entry.feature_paths):
        parts.append(f"feat:{scale:g}={entry.feature_paths[scale]}")
    return " ".join(parts)


def write_manifest(path: str | Path, entries) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for entry in entries:
            f.write(format_entry(entry) + "\n")


def load_image(path: str | Path) -> np.ndarray:
    """Load an image as (H, W, C) float32 in [0, 1].

    ``.mrft`` tensors are read as-is (2-D gets a channel axis); anything else
    goes through Pillow with the fixed value/255 normalization.
    """
    path = Path(path)
    if path.suffix == ".mrft":
        arr = read_tensor(path)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3:
            raise DataError(f"{path}: image tensor must be 2-D or 3-D, got {arr.ndim}-D")
        return arr
    from PIL import Image

    with Image.open(path) as im:
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB")
        arr = np.asarray(im, dtype=np.float32) / 255.0
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return arr
