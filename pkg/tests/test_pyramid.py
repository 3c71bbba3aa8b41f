import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from murf.errors import DataError
from murf.pyramid import ScaleSet, build_pyramid, resize_bilinear, snap_side

from oracles import bilinear_ref


def test_bilinear_2x2_to_3x3_hand_oracle():
    src = np.array([[0.0, 1.0], [2.0, 3.0]], dtype=np.float32)
    out = resize_bilinear(src, 3, 3)
    expected = np.array([[0.0, 0.5, 1.0], [1.0, 1.5, 2.0], [2.0, 2.5, 3.0]])
    assert np.allclose(out, expected, atol=1e-7)


def test_bilinear_identity():
    rng = np.random.default_rng(0)
    src = rng.random((5, 7, 3)).astype(np.float32)
    assert np.array_equal(resize_bilinear(src, 5, 7), src)


def test_bilinear_constant_preserved():
    src = np.full((5, 7), 0.625, dtype=np.float32)
    out = resize_bilinear(src, 13, 3)
    assert out.shape == (13, 3)
    assert np.all(out == 0.625)


def test_bilinear_matches_bruteforce_oracle():
    rng = np.random.default_rng(42)
    for _ in range(25):
        h, w = rng.integers(1, 17, size=2)
        oh, ow = rng.integers(1, 65, size=2)
        src = rng.random((h, w, 2)).astype(np.float32)
        got = resize_bilinear(src, oh, ow)
        assert np.max(np.abs(got - bilinear_ref(src, oh, ow))) < 1e-6


def test_bilinear_zero_size_rejected():
    with pytest.raises(DataError):
        resize_bilinear(np.ones((2, 2)), 0, 3)


@settings(max_examples=60, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    oh=st.integers(1, 20),
    ow=st.integers(1, 20),
)
def test_bilinear_output_within_input_range(seed, oh, ow):
    rng = np.random.default_rng(seed)
    src = rng.random((rng.integers(1, 9), rng.integers(1, 9))).astype(np.float32)
    out = resize_bilinear(src, oh, ow)
    assert out.min() >= src.min() - 1e-6
    assert out.max() <= src.max() + 1e-6


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), shift=st.floats(-5, 5))
def test_bilinear_constant_shift(seed, shift):
    rng = np.random.default_rng(seed)
    src = rng.random((6, 4)).astype(np.float32)
    a = resize_bilinear(src + np.float32(shift), 9, 11)
    b = resize_bilinear(src, 9, 11) + shift
    assert np.max(np.abs(a - b)) < 1e-5


def test_scale_set_validation():
    with pytest.raises(DataError):
        ScaleSet(())
    with pytest.raises(DataError):
        ScaleSet((1.0, 0.5))
    with pytest.raises(DataError):
        ScaleSet((0.5, 0.5))
    with pytest.raises(DataError):
        ScaleSet((-1.0, 0.5))
    with pytest.raises(DataError):
        ScaleSet((1.0,), mode="nope")


def test_snap_side_rounds_half_up():
    assert snap_side(259, 14) == 266
    assert snap_side(518, 14) == 518
    assert snap_side(777, 14) == 784
    assert snap_side(8, 14) == 14
    with pytest.raises(DataError):
        snap_side(6, 14)  # nearest multiple is zero


def test_pyramid_published_sides():
    image = np.zeros((518, 518, 3), dtype=np.float32)
    pyr = build_pyramid(image, ScaleSet((0.5, 1.0, 1.5)), patch=14)
    assert [p.shape[0] for p in pyr] == [266, 518, 784]
    assert [p.shape[1] for p in pyr] == [266, 518, 784]


def test_pyramid_identity_scale():
    rng = np.random.default_rng(1)
    image = rng.random((28, 42, 3)).astype(np.float32)
    (only,) = build_pyramid(image, ScaleSet((1.0,)), patch=14)
    assert np.array_equal(only, image)


def test_pyramid_absolute_side_constant_image():
    image = np.full((100, 100, 1), 0.25, dtype=np.float32)
    (only,) = build_pyramid(image, ScaleSet((28,), mode="absolute_side"), patch=14)
    assert only.shape == (28, 28, 1)
    assert np.allclose(only, 0.25)
