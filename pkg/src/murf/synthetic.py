"""Seeded synthetic benchmarks for desk-scale experiments.

The anomaly suite produces nominal textures plus test images carrying one
large low-contrast blob and one tiny high-contrast speck, so coarse scales
are needed for the blob and fine scales for the speck. The segmentation
suite pairs coarse region layout with fine boundary texture for the same
reason. Both are deterministic per seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .anomaly import build_bank, fuse_scores, score_map
from .encoder import EncoderSpec, encode
from .fusion import fuse
from .head import TrainConfig, head_forward, train_head, upsample_prediction
from .metrics import au_pro, miou
from .pyramid import ScaleSet, build_pyramid


@dataclass(frozen=True)
class AdSuite:
    train_images: list[np.ndarray]
    test_images: list[np.ndarray]
    gt_masks: list[np.ndarray]


def _nominal_texture(rng, size: int, noise: float, tex_amp: float, period: float, jitter: float) -> np.ndarray:
    yy, xx = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    # small random translation of the texture plus pixel noise; the texture
    # period is chosen so fine-scale patch grids sample it coherently while
    # coarse grids cover many phases, making the scales fail differently
    phase_y, phase_x = rng.uniform(0, jitter, 2)
    img = 0.5 + tex_amp * np.sin(2 * np.pi * (yy + phase_y) / period) * np.sin(
        2 * np.pi * (xx + phase_x) / period
    )
    img = img + rng.normal(0.0, noise, size=(size, size))
    return np.clip(img, 0.0, 1.0).astype(np.float32)[:, :, None]


def make_ad_suite(
    seed: int,
    size: int = 336,
    n_train: int = 8,
    n_test: int = 6,
    blob_side: int = 80,
    blob_amp: float = 0.04,
    speck_side: int = 14,
    speck_amp: float = 0.25,
    noise: float = 0.04,
    tex_amp: float = 0.12,
    period: float = 20.0,
    jitter: float = 6.0,
) -> AdSuite:
    """Nominal textures plus defective test images with pixel ground truth.

    Each test image carries one large low-contrast blob and one small
    high-contrast speck, so no single resolution sees both defects well.
    """
    rng = np.random.default_rng(seed)
    texture = dict(noise=noise, tex_amp=tex_amp, period=period, jitter=jitter)
    train = [_nominal_texture(rng, size, **texture) for _ in range(n_train)]
    test, masks = [], []
    for _ in range(n_test):
        img = _nominal_texture(rng, size, **texture)
        mask = np.zeros((size, size), dtype=np.uint8)
        by, bx = (int(v) for v in rng.integers(8, size - blob_side - 8, 2))
        img[by : by + blob_side, bx : bx + blob_side, 0] += blob_amp
        mask[by : by + blob_side, bx : bx + blob_side] = 1
        while True:
            sy, sx = (int(v) for v in rng.integers(4, size - speck_side - 4, 2))
            if (
                sy + speck_side < by - 12
                or sy > by + blob_side + 12
                or sx + speck_side < bx - 12
                or sx > bx + blob_side + 12
            ):
                break
        img[sy : sy + speck_side, sx : sx + speck_side, 0] += speck_amp
        mask[sy : sy + speck_side, sx : sx + speck_side] = 1
        test.append(np.clip(img, 0.0, 1.0).astype(np.float32))
        masks.append(mask)
    return AdSuite(train_images=train, test_images=test, gt_masks=masks)


def ad_au_pro(
    suite: AdSuite,
    scales: ScaleSet,
    spec: EncoderSpec,
    fpr_limit: float = 0.05,
) -> float:
    """AU-PRO of the fused multi-scale pipeline on an in-memory suite."""
    layer = spec.layers[-1]
    layer_spec = EncoderSpec("toy", spec.patch, spec.dim, spec.seed, (layer,))
    banks = []
    per_scale_train: list[list] = [[] for _ in scales.scales]
    for img in suite.train_images:
        for i, scaled in enumerate(build_pyramid(img, scales, spec.patch)):
            per_scale_train[i].append(encode(layer_spec, scaled)[0])
    for s, maps in zip(scales.scales, per_scale_train):
        banks.append(build_bank(maps, scale=s))
    fused_maps = []
    for img in suite.test_images:
        h, w = img.shape[:2]
        smaps = [
            score_map(bank, encode(layer_spec, scaled)[0])
            for bank, scaled in zip(banks, build_pyramid(img, scales, spec.patch))
        ]
        fused_maps.append(fuse_scores(smaps, h, w))
    return au_pro(fused_maps, suite.gt_masks, fpr_limit)


@dataclass(frozen=True)
class SegSuite:
    train_images: list[np.ndarray]
    train_masks: list[np.ndarray]
    test_images: list[np.ndarray]
    test_masks: list[np.ndarray]
    num_classes: int = 2


def _seg_sample(rng, size: int) -> tuple[np.ndarray, np.ndarray]:
    yy, xx = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    mask = np.zeros((size, size), dtype=np.uint8)
    # coarse cue: one large soft-edged region of slightly raised brightness
    h = int(rng.integers(size // 3, 2 * size // 3))
    w = int(rng.integers(size // 3, 2 * size // 3))
    y0 = int(rng.integers(0, size - h))
    x0 = int(rng.integers(0, size - w))
    mask[y0 : y0 + h, x0 : x0 + w] = 1
    img = 0.5 + 0.04 * np.where(mask == 1, 1.0, -1.0)
    # fine cue: high-frequency stripes only inside the region
    stripes = 0.08 * np.sin((yy + xx) * np.pi / 2.0)
    img = img + stripes * (mask == 1)
    img = img + rng.normal(0.0, 0.05, size=(size, size))
    return np.clip(img, 0.0, 1.0).astype(np.float32)[:, :, None], mask


def make_seg_suite(
    seed: int, size: int = 112, n_train: int = 10, n_test: int = 4
) -> SegSuite:
    rng = np.random.default_rng(seed)
    train = [_seg_sample(rng, size) for _ in range(n_train)]
    test = [_seg_sample(rng, size) for _ in range(n_test)]
    return SegSuite(
        train_images=[img for img, _ in train],
        train_masks=[m for _, m in train],
        test_images=[img for img, _ in test],
        test_masks=[m for _, m in test],
    )


def seg_miou(
    suite: SegSuite,
    scales: ScaleSet,
    spec: EncoderSpec,
    steps: int = 20000,
    learning_rate: float | None = None,
) -> float:
    """Train a fused-feature linear head on the suite and report test mIoU.

    When ``learning_rate`` is None it is set to 3 / lambda_max of the training
    feature second-moment matrix, which keeps full-batch descent stable on the
    poorly conditioned raw features.
    """
    from .head import nearest_downsample

    layer_spec = EncoderSpec("toy", spec.patch, spec.dim, spec.seed, (spec.layers[-1],))

    def featurize(img):
        maps = [
            (s, encode(layer_spec, scaled)[0])
            for s, scaled in zip(scales.scales, build_pyramid(img, scales, spec.patch))
        ]
        return fuse(maps)

    samples = []
    for img, mask in zip(suite.train_images, suite.train_masks):
        fused = featurize(img)
        grid_labels = nearest_downsample(mask, fused.grid_h, fused.grid_w)
        samples.append((fused, grid_labels[..., None]))
    if learning_rate is None:
        x = np.concatenate(
            [f.data.reshape(-1, f.total_dim) for f, _ in samples]
        ).astype(np.float64)
        lam = float(np.linalg.eigvalsh(x.T @ x / len(x)).max())
        learning_rate = 3.0 / lam
    config = TrainConfig(learning_rate=learning_rate, steps=steps, batch=10**9, seed=0)
    head = train_head(samples, out_dim=suite.num_classes, config=config, task="segmentation")

    preds, gts = [], []
    for img, mask in zip(suite.test_images, suite.test_masks):
        fused = featurize(img)
        logits = head_forward(head, fused)
        preds.append(upsample_prediction(logits, img.shape[0], img.shape[1], "segmentation"))
        gts.append(mask)
    return float(
        np.mean([miou(p, g, suite.num_classes) for p, g in zip(preds, gts)])
    )
