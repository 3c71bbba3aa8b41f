"""Write a small synthetic dataset (images, masks, manifest) for CLI demos.

The output directory can be fed straight to the command-line tools, e.g.:

    python scripts/make_demo_dataset.py --out-dir demo
    murf ad-score --manifest demo/manifest.txt --scales 0.3,0.5,0.7 \\
        --encoder toy:patch=14,dim=8,seed=0 --out-dir demo/scores
"""

import argparse
from pathlib import Path

from murf import tensorio
from murf.synthetic import make_ad_suite


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out-dir", required=True, help="directory to create")
    parser.add_argument("--seed", type=int, default=0, help="suite seed")
    args = parser.parse_args()

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    suite = make_ad_suite(args.seed)
    entries = []
    for i, img in enumerate(suite.train_images):
        name = f"train_{i}.mrft"
        tensorio.write_tensor(out / name, img)
        entries.append(tensorio.ManifestEntry(name, "train"))
    for i, (img, mask) in enumerate(zip(suite.test_images, suite.gt_masks)):
        name = f"test_{i}.mrft"
        mask_name = f"test_{i}_mask.mrft"
        tensorio.write_tensor(out / name, img)
        tensorio.write_tensor(out / mask_name, mask.astype("float32"))
        entries.append(tensorio.ManifestEntry(name, "test", label=1, mask_path=mask_name))
    tensorio.write_manifest(out / "manifest.txt", entries)
    print(f"wrote {len(entries)} entries to {out / 'manifest.txt'}")


if __name__ == "__main__":
    main()
