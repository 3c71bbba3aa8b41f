"""Command-line interface for the fusion pipeline.

Subcommands cover the full workflow: feature fusion, linear-head training and
prediction, memory-bank building and scoring, metric evaluation, and PCA
visualization. Exit codes are stable for scripting: 0 success, 1 usage error,
2 data error, 3 numeric failure. The environment variable ``MURF_THREADS``
caps internal worker threads. All commands are deterministic given identical
flags, seed, and inputs.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import tensorio
from .anomaly import build_bank, load_bank, run_ad, save_bank
from .encoder import EncoderSpec, encode, file_features
from .errors import DataError, MurfError, NumericError
from .fusion import fuse, load_fused, pca_project, save_fused
from .head import (
    TrainConfig,
    depth_readout,
    head_forward,
    load_head,
    nearest_downsample,
    save_head,
    train_head,
    upsample_prediction,
)
from .metrics import au_pro, miou, rmse
from .pyramid import ScaleSet, build_pyramid

USAGE_ERROR = 1
DATA_ERROR = 2
NUMERIC_ERROR = 3


class _Parser(argparse.ArgumentParser):
    """Argument parser whose usage failures exit with code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(USAGE_ERROR)


def parse_scales(text: str, mode: str = "relative_factor") -> ScaleSet:
    try:
        values = tuple(float(part) for part in text.split(","))
    except ValueError as exc:
        raise DataError(f"bad scale list {text!r}: {exc}") from None
    return ScaleSet(values, mode=mode)


def parse_encoder(text: str) -> EncoderSpec:
    """Parse an encoder spec like ``toy:patch=14,dim=8,seed=7``.

    Supported kinds: ``toy`` (keys patch, dim, seed, layers) and ``file``
    (keys patch, layers) for precomputed features referenced by manifests.
    Multiple layers are joined with ``+``, e.g. ``layers=0+1+2``.
    """
    kind, _, rest = text.partition(":")
    fields: dict[str, object] = {"patch": 14, "dim": 8}
    if rest:
        for item in rest.split(","):
            key, eq, value = item.partition("=")
            if not eq:
                raise DataError(f"bad encoder field {item!r} (expected key=value)")
            if key == "layers":
                fields[key] = tuple(int(v) for v in value.split("+"))
            elif key in ("patch", "dim", "seed"):
                try:
                    fields[key] = int(value)
                except ValueError:
                    raise DataError(f"encoder field {key} must be an integer") from None
            else:
                raise DataError(f"unknown encoder field {key!r}")
    return EncoderSpec(kind=kind, **fields)


def _entry_feature_maps(spec, scales, path, manifest=None, entry=None):
    """Per-scale (scale, FeatureMap) pairs from the encoder or feature files."""
    if spec.kind == "file":
        if manifest is None or entry is None:
            raise DataError("file encoder requires a manifest with feat:<scale> paths")
        return [
            (s, file_features(manifest, entry, s, layer=spec.layers[-1]))
            for s in scales.scales
        ]
    image = tensorio.load_image(path)
    layer_spec = EncoderSpec(
        "toy", spec.patch, spec.dim, spec.seed, (spec.layers[-1],)
    )
    return [
        (s, encode(layer_spec, scaled)[0])
        for s, scaled in zip(scales.scales, build_pyramid(image, scales, spec.patch))
    ]


def _config_hash(args: argparse.Namespace) -> str:
    # output locations are not part of the configuration identity
    payload = {
        k: v for k, v in sorted(vars(args).items()) if k not in ("func", "out", "out_dir")
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True, default=str).encode()).hexdigest()


def _write_run_manifest(out_dir: Path, args: argparse.Namespace) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = [f"command={args.command}", f"config_sha256={_config_hash(args)}"]
    for key, value in sorted(vars(args).items()):
        if key in ("func", "command"):
            continue
        lines.append(f"{key}={value}")
    (out_dir / "run-manifest.txt").write_text("\n".join(lines) + "\n")


def _out_path(args, default_name: str) -> Path:
    if getattr(args, "out", None):
        return Path(args.out)
    if getattr(args, "out_dir", None):
        return Path(args.out_dir) / default_name
    raise DataError("either --out or --out-dir is required")


def cmd_fuse(args) -> int:
    scales = parse_scales(args.scales, args.scale_mode)
    spec = parse_encoder(args.encoder)
    maps = _entry_feature_maps(spec, scales, args.image)
    fused = fuse(maps)
    if args.out_dir:
        _write_run_manifest(Path(args.out_dir), args)
    save_fused(_out_path(args, "fused.mrft"), fused)
    return 0


def cmd_train_head(args) -> int:
    scales = parse_scales(args.scales, args.scale_mode)
    spec = parse_encoder(args.encoder)
    manifest = tensorio.load_manifest(args.manifest)
    train_entries = manifest.split("train")
    if not train_entries:
        raise DataError("manifest has no train entries")
    samples = []
    for entry in train_entries:
        if entry.mask_path is None:
            raise DataError(f"train entry {entry.image_path} has no mask/target")
        fused = fuse(
            _entry_feature_maps(
                spec, scales, manifest.resolve(entry.image_path), manifest, entry
            )
        )
        target = tensorio.load_image(manifest.resolve(entry.mask_path))
        if args.task == "segmentation":
            grid = nearest_downsample(
                np.rint(target[..., 0]).astype(np.int64), fused.grid_h, fused.grid_w
            )[..., None]
        else:
            grid = nearest_downsample(
                target[..., 0].astype(np.float64), fused.grid_h, fused.grid_w
            )[..., None]
        samples.append((fused, grid))
    config = TrainConfig(
        learning_rate=args.lr,
        steps=args.steps,
        batch=args.batch,
        seed=args.seed,
        loss="cross_entropy" if args.task == "segmentation" else "mse",
        cls_concat=args.cls_concat,
        log_depth=not args.no_log_depth,
    )
    out_dim = args.classes if args.task == "segmentation" else 1
    head = train_head(samples, out_dim=out_dim, config=config, task=args.task)
    out_dir = Path(args.out_dir)
    _write_run_manifest(out_dir, args)
    save_head(out_dir / "head", head)
    return 0


def cmd_predict(args) -> int:
    scales = parse_scales(args.scales, args.scale_mode)
    spec = parse_encoder(args.encoder)
    head = load_head(args.head)
    fused = fuse(_entry_feature_maps(spec, scales, args.image))
    grid = head_forward(head, fused)
    image = tensorio.load_image(args.image)
    pred = upsample_prediction(grid, image.shape[0], image.shape[1], head.task)
    if head.task == "depth":
        pred = depth_readout(pred, log_depth=head.log_depth)
    if args.out_dir:
        _write_run_manifest(Path(args.out_dir), args)
    tensorio.write_tensor(_out_path(args, "prediction.mrft"), pred.astype(np.float32))
    return 0


def cmd_ad_build(args) -> int:
    scales = parse_scales(args.scales, args.scale_mode)
    spec = parse_encoder(args.encoder)
    manifest = tensorio.load_manifest(args.manifest)
    train_entries = manifest.split("train")
    if not train_entries:
        raise DataError("manifest has no train entries")
    per_scale = [[] for _ in scales.scales]
    for entry in train_entries:
        maps = _entry_feature_maps(
            spec, scales, manifest.resolve(entry.image_path), manifest, entry
        )
        for i, (_, fmap) in enumerate(maps):
            per_scale[i].append(fmap)
    out_dir = Path(args.out_dir)
    _write_run_manifest(out_dir, args)
    for s, maps in zip(scales.scales, per_scale):
        bank = build_bank(
            maps, scale=s, coreset_fraction=args.coreset_fraction, normalize=args.normalize
        )
        save_bank(out_dir / f"bank_{s:g}", bank)
    return 0


def cmd_ad_score(args) -> int:
    scales = parse_scales(args.scales, args.scale_mode)
    spec = parse_encoder(args.encoder)
    manifest = tensorio.load_manifest(args.manifest)
    banks = None
    if args.banks:
        banks = [load_bank(Path(args.banks) / f"bank_{s:g}") for s in scales.scales]
    results = run_ad(
        manifest,
        scales,
        spec,
        banks=banks,
        coreset_fraction=args.coreset_fraction,
        normalize=args.normalize,
        smoothing_sigma=args.smoothing_sigma,
    )
    out_dir = Path(args.out_dir)
    _write_run_manifest(out_dir, args)
    lines = []
    for res in results:
        name = Path(res.entry.image_path).stem
        tensorio.write_tensor(out_dir / f"{name}_score.mrft", res.score_map)
        lines.append(f"{res.entry.image_path}\t{res.image_score:.9g}")
    (out_dir / "scores.txt").write_text("\n".join(lines) + "\n")
    return 0


def cmd_eval(args) -> int:
    preds = [tensorio.read_tensor(p) for p in args.pred.split(",")]
    gts = [tensorio.load_image(p)[..., 0] for p in args.gt.split(",")]
    if args.metric == "miou":
        values = [
            miou(np.rint(p).astype(np.int64), np.rint(g).astype(np.int64), args.classes)
            for p, g in zip(preds, gts)
        ]
        value = float(np.mean(values))
    elif args.metric == "rmse":
        value = float(np.mean([rmse(p, g) for p, g in zip(preds, gts)]))
    else:
        value = au_pro(preds, [np.rint(g).astype(np.int64) for g in gts], args.fpr_limit)
    print(f"{args.metric}={value:.6f}")
    if args.out_dir:
        _write_run_manifest(Path(args.out_dir), args)
        (Path(args.out_dir) / "eval.txt").write_text(f"{args.metric}={value:.6f}\n")
    return 0


def cmd_pca_viz(args) -> int:
    from PIL import Image

    if args.fused:
        fused = load_fused(args.fused)
    else:
        scales = parse_scales(args.scales, args.scale_mode)
        spec = parse_encoder(args.encoder)
        fused = fuse(_entry_feature_maps(spec, scales, args.image))
    rgb = pca_project(fused.data, components=args.components)
    if rgb.shape[2] < 3:
        rgb = np.repeat(rgb[:, :, :1], 3, axis=2)
    out = _out_path(args, "pca.png")
    if args.out_dir:
        _write_run_manifest(Path(args.out_dir), args)
    Image.fromarray((rgb[:, :, :3] * 255).round().astype(np.uint8)).save(out)
    return 0


def _add_common(parser, image=False, manifest=False):
    parser.add_argument("--scales", required=True, help="comma-separated scale list")
    parser.add_argument(
        "--scale-mode",
        choices=("relative_factor", "absolute_side"),
        default="relative_factor",
        help="interpret scales as relative factors or absolute pixel sides",
    )
    parser.add_argument(
        "--encoder", required=True, help="encoder spec, e.g. toy:patch=14,dim=8,seed=7"
    )
    if image:
        parser.add_argument("--image", required=True, help="input image (.mrft or 8-bit image)")
    if manifest:
        parser.add_argument("--manifest", required=True, help="dataset manifest file")


def build_parser() -> _Parser:
    parser = _Parser(prog="murf", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fuse", help="fuse multi-scale features for one image")
    _add_common(p, image=True)
    p.add_argument("--out", help="output fused feature file")
    p.add_argument("--out-dir", help="output directory (writes run-manifest)")
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("train-head", help="train a linear head on fused features")
    _add_common(p, manifest=True)
    p.add_argument("--task", choices=("segmentation", "depth"), required=True)
    p.add_argument("--classes", type=int, default=2, help="number of segmentation classes")
    p.add_argument("--steps", type=int, default=200, help="gradient steps")
    p.add_argument("--lr", type=float, default=0.01, help="learning rate")
    p.add_argument("--batch", type=int, default=2**31, help="positions per step")
    p.add_argument("--seed", type=int, default=0, help="sampling seed")
    p.add_argument("--cls-concat", action="store_true", help="append global tokens")
    p.add_argument("--no-log-depth", action="store_true", help="regress raw depth, not log")
    p.add_argument("--out-dir", required=True, help="output directory (writes run-manifest)")
    p.set_defaults(func=cmd_train_head)

    p = sub.add_parser("predict", help="run a trained head on one image")
    _add_common(p, image=True)
    p.add_argument("--head", required=True, help="trained head directory")
    p.add_argument("--out", help="output prediction tensor")
    p.add_argument("--out-dir", help="output directory (writes run-manifest)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("ad-build", help="build per-scale memory banks from train images")
    _add_common(p, manifest=True)
    p.add_argument("--coreset-fraction", type=float, default=1.0, help="k-center keep fraction")
    p.add_argument("--normalize", action="store_true", help="l2-normalize bank vectors")
    p.add_argument("--out-dir", required=True, help="output directory (writes run-manifest)")
    p.set_defaults(func=cmd_ad_build)

    p = sub.add_parser("ad-score", help="score test images against memory banks")
    _add_common(p, manifest=True)
    p.add_argument("--banks", help="directory of prebuilt banks (default: build from train)")
    p.add_argument("--coreset-fraction", type=float, default=1.0, help="k-center keep fraction")
    p.add_argument("--normalize", action="store_true", help="l2-normalize bank vectors")
    p.add_argument("--smoothing-sigma", type=float, default=0.0, help="Gaussian smoothing sigma")
    p.add_argument("--out-dir", required=True, help="output directory (writes run-manifest)")
    p.set_defaults(func=cmd_ad_score)

    p = sub.add_parser("eval", help="evaluate predictions against ground truth")
    p.add_argument("--metric", choices=("miou", "rmse", "au_pro"), required=True)
    p.add_argument("--pred", required=True, help="comma-separated prediction tensors")
    p.add_argument("--gt", required=True, help="comma-separated ground-truth files")
    p.add_argument("--classes", type=int, default=2, help="number of segmentation classes")
    p.add_argument("--fpr-limit", type=float, default=0.05, help="integration limit")
    p.add_argument("--out-dir", help="output directory (writes run-manifest)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("pca-viz", help="write a PCA color image of fused features")
    p.add_argument("--scales", help="comma-separated scale list")
    p.add_argument(
        "--scale-mode",
        choices=("relative_factor", "absolute_side"),
        default="relative_factor",
        help="interpret scales as relative factors or absolute pixel sides",
    )
    p.add_argument("--encoder", help="encoder spec, e.g. toy:patch=14,dim=8,seed=7")
    p.add_argument("--image", help="input image (.mrft or 8-bit image)")
    p.add_argument("--fused", help="precomputed fused feature file (alternative to --image)")
    p.add_argument("--components", type=int, default=3, help="PCA components to render")
    p.add_argument("--out", help="output PNG path")
    p.add_argument("--out-dir", help="output directory (writes run-manifest)")
    p.set_defaults(func=cmd_pca_viz)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else 0
    try:
        if args.command == "pca-viz" and not args.fused and not (args.image and args.scales and args.encoder):
            raise DataError("pca-viz needs either --fused or --image/--scales/--encoder")
        return args.func(args)
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return NUMERIC_ERROR
    except (DataError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return DATA_ERROR
    except MurfError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_ERROR


if __name__ == "__main__":
    sys.exit(main())
