"""Regenerate the cross-language fixtures under bridge/tests/fixtures.

The bridge's test suite checks that its tensor and manifest codecs are
bit-compatible with this package by reading files written here and comparing
bytes. Run from the repository root:

    python3 scripts/make_bridge_fixtures.py
"""

import argparse
import json
from pathlib import Path

import numpy as np

from murf.pyramid import resize_bilinear
from murf.tensorio import ManifestEntry, write_manifest, write_tensor


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument(
        "--out-dir",
        default="bridge/tests/fixtures",
        help="fixture directory (default: %(default)s)",
    )
    args = parser.parse_args()
    fx = Path(args.out_dir)
    fx.mkdir(parents=True, exist_ok=True)

    # The canonical 30-byte 1x1 tensor file.
    write_tensor(fx / "one.mrft", np.array([[1.5]], dtype=np.float32))

    # A 2x3x4 tensor with awkward values (negative zero, tiny, large), plus a
    # JSON copy of the expected contents for the foreign reader to verify.
    rng = np.random.default_rng(42)
    block = rng.standard_normal((2, 3, 4)).astype(np.float32)
    block[0, 0, 0] = -0.0
    block[1, 2, 3] = 1e-30
    block[0, 1, 2] = -3.25e7
    write_tensor(fx / "block.mrft", block)
    (fx / "block.json").write_text(
        json.dumps({"dims": list(block.shape), "data": [float(v) for v in block.ravel()]})
        + "\n"
    )

    # Two small grayscale images (28x28x1 = 2x2 patches of 14) and reference
    # bilinear resamplings for the bit-exact resize check.
    img = np.linspace(0, 1, 28 * 28, dtype=np.float32).reshape(28, 28, 1)
    img = img + 0.1 * rng.standard_normal((28, 28, 1)).astype(np.float32)
    img = np.clip(img, 0, 1).astype(np.float32)
    write_tensor(fx / "img_a.mrft", img)
    img_b = np.clip(img[::-1, :, :].copy() * 0.8 + 0.1, 0, 1).astype(np.float32)
    write_tensor(fx / "img_b.mrft", img_b)
    write_tensor(fx / "img_a_14.mrft", resize_bilinear(img, 14, 14))
    write_tensor(fx / "img_a_37.mrft", resize_bilinear(img, 37, 37))

    # A manifest in this package's canonical formatting.
    entries = [
        ManifestEntry(
            "img_a.mrft",
            "train",
            label=0,
            feature_paths={0.5: "feats/a_s0.5.mrft", 1.0: "feats/a_s1.mrft"},
        ),
        ManifestEntry("img_b.mrft", "test", label=1, mask_path="masks/b.mrft"),
    ]
    write_manifest(fx / "manifest.txt", entries)
    print(f"wrote fixtures to {fx}")


if __name__ == "__main__":
    main()
