"""Input pyramids and bilinear resampling.

The single bilinear primitive serves both image downscaling and feature
upsampling. The sampling convention is corner-aligned: output index ``i``
reads source coordinate ``i * (H - 1) / (H' - 1)`` when ``H' > 1``, else 0.
Resizing to the source's own shape is therefore an exact identity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError, ShapeError


@dataclass(frozen=True)
class ScaleSet:
    """Ordered set of scales, either relative factors or absolute square sides."""

    scales: tuple[float, ...]
    mode: str = "relative_factor"  # or "absolute_side"

    def __post_init__(self):
        if self.mode not in ("relative_factor", "absolute_side"):
            raise DataError(f"unknown scale mode {self.mode!r}")
        if len(self.scales) < 1:
            raise DataError("scale set must be non-empty")
        if any(s <= 0 for s in self.scales):
            raise DataError("scales must be positive")
        if any(b <= a for a, b in zip(self.scales, self.scales[1:])):
            raise DataError("scales must be strictly increasing")


def resize_bilinear(src, out_h: int, out_w: int) -> np.ndarray:
    """Bilinearly resample a (H, W) or (H, W, C) array to (out_h, out_w[, C])."""
    src = np.asarray(src)
    if src.ndim not in (2, 3):
        raise ShapeError(f"expected 2-D or 3-D input, got {src.ndim}-D")
    if src.size == 0:
        raise ShapeError("empty input")
    if out_h < 1 or out_w < 1:
        raise DataError(f"zero-size resize request ({out_h}x{out_w})")

    squeeze = src.ndim == 2
    if squeeze:
        src = src[:, :, None]
    h, w, _ = src.shape

    ys = _sample_coords(h, out_h)
    xs = _sample_coords(w, out_w)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[:, None, None]
    wx = (xs - x0)[None, :, None]

    data = src.astype(np.float64, copy=False)
    top = data[y0][:, x0] * (1.0 - wx) + data[y0][:, x1] * wx
    bot = data[y1][:, x0] * (1.0 - wx) + data[y1][:, x1] * wx
    out = top * (1.0 - wy) + bot * wy
    out = out.astype(np.float32)
    return out[:, :, 0] if squeeze else out


def _sample_coords(src_len: int, out_len: int) -> np.ndarray:
    if out_len == 1:
        return np.zeros(1, dtype=np.float64)
    return np.arange(out_len, dtype=np.float64) * ((src_len - 1) / (out_len - 1))


def snap_side(target: float, patch: int) -> int:
    """Round a target side length to the nearest multiple of ``patch``.

    Rounds halves up (259 with patch 14 snaps to 266, not 252). A target
    whose nearest multiple is zero is an error rather than being clamped.
    """
    if patch < 1:
        raise DataError(f"patch must be >= 1, got {patch}")
    m = math.floor(target / patch + 0.5)
    if m < 1:
        raise DataError(
            f"target side {target:g} collapses below one patch of {patch}px"
        )
    return m * patch


def build_pyramid(image, scales: ScaleSet, patch: int) -> list[np.ndarray]:
    """Resize ``image`` once per scale, snapping sides to patch multiples.

    Relative factors scale height and width independently; absolute sides
    produce square images.
    """
    image = np.asarray(image)
    if image.ndim != 3:
        raise ShapeError(f"expected (H, W, C) image, got shape {image.shape}")
    h, w, _ = image.shape
    out = []
    for s in scales.scales:
        if scales.mode == "relative_factor":
            th, tw = snap_side(s * h, patch), snap_side(s * w, patch)
        else:
            th = tw = snap_side(s, patch)
        if th == h and tw == w:
            out.append(image.astype(np.float32, copy=False))
        else:
            out.append(resize_bilinear(image, th, tw))
    return out
