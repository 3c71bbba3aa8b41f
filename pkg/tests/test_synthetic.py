import numpy as np
import pytest
from scipy import ndimage

from murf.encoder import EncoderSpec
from murf.pyramid import ScaleSet
from murf.synthetic import ad_au_pro, make_ad_suite, make_seg_suite, seg_miou

SPEC = EncoderSpec("toy", patch=14, dim=8, seed=0, layers=(0,))


def test_ad_suite_is_deterministic():
    a = make_ad_suite(3)
    b = make_ad_suite(3)
    for x, y in zip(a.train_images + a.test_images, b.train_images + b.test_images):
        assert np.array_equal(x, y)
    for x, y in zip(a.gt_masks, b.gt_masks):
        assert np.array_equal(x, y)


def test_ad_suite_structure():
    suite = make_ad_suite(0)
    assert len(suite.train_images) == 8
    assert len(suite.test_images) == len(suite.gt_masks) == 6
    for img in suite.train_images + suite.test_images:
        assert img.dtype == np.float32
        assert img.min() >= 0.0 and img.max() <= 1.0
    for mask in suite.gt_masks:
        # exactly two separated defect regions: one large blob, one speck
        labeled, count = ndimage.label(mask, structure=np.ones((3, 3)))
        assert count == 2
        areas = sorted(int(s) for s in ndimage.sum_labels(mask, labeled, [1, 2]))
        assert areas == [14 * 14, 80 * 80]


def test_ad_fused_beats_each_single_scale():
    scales = (0.3, 0.5, 0.7)
    for seed in range(3):
        suite = make_ad_suite(seed)
        fused = ad_au_pro(suite, ScaleSet(scales), SPEC)
        singles = [ad_au_pro(suite, ScaleSet((s,)), SPEC) for s in scales]
        assert fused >= max(singles) - 0.005


def test_ad_five_scales_at_least_three_on_average():
    three = ScaleSet((0.3, 0.5, 0.7))
    five = ScaleSet((0.3, 0.4, 0.5, 0.6, 0.7))
    deltas = []
    for seed in range(10):
        suite = make_ad_suite(seed)
        deltas.append(ad_au_pro(suite, five, SPEC) - ad_au_pro(suite, three, SPEC))
    assert float(np.mean(deltas)) >= -0.005


def test_seg_suite_is_deterministic_and_binary():
    a = make_seg_suite(1)
    b = make_seg_suite(1)
    for x, y in zip(a.train_images + a.test_images, b.train_images + b.test_images):
        assert np.array_equal(x, y)
    for mask in a.train_masks + a.test_masks:
        assert set(np.unique(mask)) <= {0, 1}


def test_seg_fused_beats_single_scales():
    scales = (0.5, 1.0)
    for seed in range(2):
        suite = make_seg_suite(seed)
        fused = seg_miou(suite, ScaleSet(scales), SPEC)
        singles = [seg_miou(suite, ScaleSet((s,)), SPEC) for s in scales]
        assert fused >= max(singles)
        assert fused > 55.0  # the fused head genuinely learns the task


def test_seg_miou_respects_explicit_learning_rate():
    suite = make_seg_suite(0)
    frozen = seg_miou(suite, ScaleSet((1.0,)), SPEC, steps=1, learning_rate=0.0)
    assert frozen == pytest.approx(frozen)  # runs end to end and is finite
