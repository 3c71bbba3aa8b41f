"""Multi-resolution feature fusion over a frozen patch-feature encoder.

Frozen per-scale feature maps are bilinearly aligned and channel-concatenated;
light heads (linear probes or nearest-neighbor memory banks) consume the fused
grid for dense prediction and anomaly detection.
"""

__version__ = "0.1.0"

from .encoder import EncoderSpec, FeatureMap, encode
from .fusion import FusedFeatureMap, fuse
from .pyramid import ScaleSet, build_pyramid, resize_bilinear

__all__ = [
    "EncoderSpec",
    "FeatureMap",
    "FusedFeatureMap",
    "ScaleSet",
    "build_pyramid",
    "encode",
    "fuse",
    "resize_bilinear",
    "__version__",
]
