"""Multi-scale anomaly-detection benchmark on the seeded synthetic suite.

Per seed, builds per-scale memory banks from nominal textures, scores test
images carrying one low-contrast blob and one high-contrast speck, and prints
AU-PRO at the FPR limit for each single scale and for the fused score maps.
"""

import argparse

import numpy as np

from murf.encoder import EncoderSpec
from murf.pyramid import ScaleSet
from murf.synthetic import ad_au_pro, make_ad_suite


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seeds", type=int, default=10, help="number of suite seeds")
    parser.add_argument(
        "--scales", default="0.3,0.5,0.7", help="comma-separated relative scales"
    )
    parser.add_argument("--dim", type=int, default=8, help="encoder feature dimension")
    parser.add_argument("--fpr-limit", type=float, default=0.05, help="AU-PRO FPR limit")
    args = parser.parse_args()

    scales = tuple(float(s) for s in args.scales.split(","))
    spec = EncoderSpec("toy", patch=14, dim=args.dim, seed=0, layers=(0,))

    header = ["seed"] + [f"s={s:g}" for s in scales] + ["fused", "margin"]
    print("  ".join(f"{h:>8}" for h in header))
    margins = []
    for seed in range(args.seeds):
        suite = make_ad_suite(seed)
        singles = [
            ad_au_pro(suite, ScaleSet((s,)), spec, fpr_limit=args.fpr_limit)
            for s in scales
        ]
        fused = ad_au_pro(suite, ScaleSet(scales), spec, fpr_limit=args.fpr_limit)
        margin = fused - max(singles)
        margins.append(margin)
        row = [f"{seed:>8}"] + [f"{v:8.4f}" for v in singles + [fused, margin]]
        print("  ".join(row))
    print(
        f"\nfused beat the best single scale by {np.mean(margins):+.4f} on average "
        f"(min {min(margins):+.4f}) over {args.seeds} seeds"
    )


if __name__ == "__main__":
    main()
