import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from murf.encoder import FeatureMap
from murf.errors import DataError, ShapeError
from murf.fusion import fuse
from murf.head import (
    LinearHead,
    TrainConfig,
    depth_readout,
    features_matrix,
    head_forward,
    load_head,
    loss_and_grad,
    nearest_downsample,
    save_head,
    train_head,
    upsample_prediction,
)

from oracles import least_squares_rmse_ref


def _fused(rng, gh=2, gw=2, dim=3, token=False):
    tok = rng.standard_normal(dim).astype(np.float32) if token else None
    fmap = FeatureMap(
        data=rng.standard_normal((gh, gw, dim)).astype(np.float32),
        global_token=tok,
    )
    return fuse([(1.0, fmap)])


def test_zero_weights_constant_output():
    rng = np.random.default_rng(0)
    fused = _fused(rng)
    head = LinearHead(weights=np.zeros((2, 3)), bias=np.array([0.5, -1.0]), task="segmentation")
    out = head_forward(head, fused)
    assert np.allclose(out[..., 0], 0.5) and np.allclose(out[..., 1], -1.0)


def test_identity_head_returns_features():
    rng = np.random.default_rng(1)
    fused = _fused(rng, dim=4)
    head = LinearHead(weights=np.eye(4), bias=np.zeros(4), task="depth")
    assert np.allclose(head_forward(head, fused), fused.data, atol=1e-6)


def test_hand_computed_affine():
    fmap = FeatureMap(data=np.array([[[1.0, 2.0]]], dtype=np.float32))
    fused = fuse([(1.0, fmap)])
    head = LinearHead(weights=np.array([[1.0, 1.0]]), bias=np.array([0.5]), task="depth")
    assert head_forward(head, fused)[0, 0, 0] == pytest.approx(3.5)


def test_dim_mismatch_rejected():
    rng = np.random.default_rng(2)
    fused = _fused(rng, dim=3)
    head = LinearHead(weights=np.zeros((2, 5)), bias=np.zeros(2), task="segmentation")
    with pytest.raises(ShapeError):
        head_forward(head, fused)


def test_cls_concat_broadcasts_tokens():
    rng = np.random.default_rng(3)
    fmaps = [
        (s, FeatureMap(data=rng.standard_normal((2, 2, 3)).astype(np.float32),
                       global_token=np.full(3, s, dtype=np.float32)))
        for s in (0.5, 1.0)
    ]
    fused = fuse(fmaps)
    feats = features_matrix(fused, cls_concat=True)
    assert feats.shape == (2, 2, 12)
    assert np.allclose(feats[:, :, 6:9], 0.5)  # tokens appended in ascending scale order
    assert np.allclose(feats[:, :, 9:12], 1.0)


def test_cls_concat_requires_tokens():
    rng = np.random.default_rng(4)
    fused = _fused(rng, token=False)
    with pytest.raises(DataError):
        features_matrix(fused, cls_concat=True)


def test_upsample_prediction_argmax_at_size():
    logits = np.zeros((2, 2, 3))
    logits[..., 1] = 5.0
    labels = upsample_prediction(logits, 2, 2, "segmentation")
    assert np.all(labels == 1)


def test_upsample_prediction_tie_breaks_low():
    logits = np.zeros((1, 1, 3))
    logits[..., 0] = 2.0
    logits[..., 2] = 2.0
    assert upsample_prediction(logits, 4, 4, "segmentation").max() == 0


def test_argmax_invariant_to_logit_shift():
    rng = np.random.default_rng(5)
    logits = rng.standard_normal((3, 3, 4))
    a = upsample_prediction(logits, 9, 9, "segmentation")
    b = upsample_prediction(logits + 7.25, 9, 9, "segmentation")
    assert np.array_equal(a, b)


def test_depth_upsample_and_readout():
    grid = np.log(np.array([[1.0, 2.0], [3.0, 4.0]]))[..., None]
    up = upsample_prediction(grid, 2, 2, "depth")
    assert np.allclose(depth_readout(up, log_depth=True), [[1, 2], [3, 4]], atol=1e-6)


def test_nearest_downsample_identity_and_corners():
    labels = np.arange(16).reshape(4, 4)
    assert np.array_equal(nearest_downsample(labels, 4, 4), labels)
    small = nearest_downsample(labels, 2, 2)
    assert np.array_equal(small, [[0, 3], [12, 15]])


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), loss=st.sampled_from(["cross_entropy", "mse"]))
def test_gradients_match_finite_differences(seed, loss):
    rng = np.random.default_rng(seed)
    n, d, c = 6, 4, 3
    x = rng.standard_normal((n, d))
    if loss == "cross_entropy":
        y = rng.integers(0, c, size=n)
    else:
        y = rng.standard_normal((n, c))
    w = rng.standard_normal((c, d)) * 0.5
    b = rng.standard_normal(c) * 0.5
    _, gw, gb = loss_and_grad(w, b, x, y, loss)
    eps = 1e-6
    for arr, grad in ((w, gw), (b, gb)):
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = arr[idx]
            arr[idx] = orig + eps
            up, _, _ = loss_and_grad(w, b, x, y, loss)
            arr[idx] = orig - eps
            dn, _, _ = loss_and_grad(w, b, x, y, loss)
            arr[idx] = orig
            fd = (up - dn) / (2 * eps)
            denom = max(abs(fd), abs(grad[idx]), 1e-8)
            assert abs(fd - grad[idx]) / denom < 1e-4


def _make_depth_samples(rng, n_maps=4, dim=5, log_depth=False):
    true_w = rng.standard_normal(dim)
    true_b = 0.7
    samples = []
    for _ in range(n_maps):
        fmap = FeatureMap(data=rng.standard_normal((3, 3, dim)).astype(np.float32))
        fused = fuse([(1.0, fmap)])
        target = fused.data.astype(np.float64) @ true_w + true_b
        if log_depth:
            target = np.exp(target)
        samples.append((fused, target[..., None]))
    return samples


def test_depth_affine_targets_reach_zero_rmse():
    rng = np.random.default_rng(11)
    samples = _make_depth_samples(rng, log_depth=False)
    x = np.concatenate([f.data.reshape(-1, 5) for f, _ in samples]).astype(np.float64)
    lr = 0.9 / np.linalg.eigvalsh(2 * x.T @ x / len(x)).max()
    config = TrainConfig(
        learning_rate=lr, steps=4000, batch=10**9, seed=0, loss="mse", log_depth=False
    )
    head = train_head(samples, out_dim=1, config=config, task="depth")
    preds = np.concatenate(
        [head_forward(head, f).reshape(-1) for f, _ in samples]
    )
    targets = np.concatenate([t.reshape(-1) for _, t in samples])
    assert np.sqrt(np.mean((preds - targets) ** 2)) < 1e-3


def test_trained_depth_matches_closed_form():
    rng = np.random.default_rng(12)
    samples = _make_depth_samples(rng, log_depth=False)
    # add noise so the optimum RMSE is nonzero
    samples = [(f, t + rng.standard_normal(t.shape) * 0.1) for f, t in samples]
    x = np.concatenate([f.data.reshape(-1, 5) for f, _ in samples]).astype(np.float64)
    y = np.concatenate([t.reshape(-1) for _, t in samples])
    lr = 0.9 / np.linalg.eigvalsh(2 * x.T @ x / len(x)).max()
    config = TrainConfig(
        learning_rate=lr, steps=6000, batch=10**9, seed=0, loss="mse", log_depth=False
    )
    head = train_head(samples, out_dim=1, config=config, task="depth")
    preds = np.concatenate([head_forward(head, f).reshape(-1) for f, _ in samples])
    got = np.sqrt(np.mean((preds - y) ** 2))
    assert got == pytest.approx(least_squares_rmse_ref(x, y), abs=1e-3)


def test_log_depth_requires_positive_targets():
    rng = np.random.default_rng(13)
    fmap = FeatureMap(data=rng.standard_normal((2, 2, 3)).astype(np.float32))
    fused = fuse([(1.0, fmap)])
    target = np.full((2, 2, 1), -1.0)
    config = TrainConfig(learning_rate=0.1, steps=1, loss="mse", log_depth=True)
    with pytest.raises(DataError):
        train_head([(fused, target)], out_dim=1, config=config, task="depth")


def test_separable_classes_reach_high_accuracy():
    rng = np.random.default_rng(14)
    samples = []
    for _ in range(4):
        labels = rng.integers(0, 2, size=(4, 4))
        feats = rng.standard_normal((4, 4, 3)) * 0.2
        feats[..., 0] += np.where(labels == 1, 2.0, -2.0)
        fmap = FeatureMap(data=feats.astype(np.float32))
        samples.append((fuse([(1.0, fmap)]), labels[..., None]))
    config = TrainConfig(learning_rate=0.5, steps=2000, batch=10**9, seed=0)
    head = train_head(samples, out_dim=2, config=config, task="segmentation")
    correct = total = 0
    for fused, labels in samples:
        pred = np.argmax(head_forward(head, fused), axis=2)
        correct += np.sum(pred == labels[..., 0])
        total += labels[..., 0].size
    assert correct / total >= 0.99


def test_zero_learning_rate_leaves_parameters_unchanged():
    rng = np.random.default_rng(15)
    fmap = FeatureMap(data=rng.standard_normal((2, 2, 3)).astype(np.float32))
    fused = fuse([(1.0, fmap)])
    config = TrainConfig(learning_rate=0.0, steps=50, loss="mse", log_depth=False)
    head = train_head([(fused, np.ones((2, 2, 1)))], out_dim=1, config=config, task="depth")
    assert np.all(head.weights == 0.0) and np.all(head.bias == 0.0)


def test_full_batch_loss_non_increasing():
    rng = np.random.default_rng(16)
    samples = _make_depth_samples(rng, log_depth=False)
    x = np.concatenate([f.data.reshape(-1, 5) for f, _ in samples]).astype(np.float64)
    y = np.concatenate([t.reshape(-1, 1) for _, t in samples])
    lr = 0.5 / np.linalg.eigvalsh(2 * x.T @ x / len(x)).max()
    w = np.zeros((1, 5))
    b = np.zeros(1)
    losses = []
    for _ in range(120):
        value, gw, gb = loss_and_grad(w, b, x, y, "mse")
        losses.append(value)
        w = w - lr * gw
        b = b - lr * gb
    assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))


def test_training_is_deterministic():
    rng = np.random.default_rng(17)
    samples = _make_depth_samples(rng, log_depth=False)
    config = TrainConfig(learning_rate=1e-3, steps=300, batch=8, seed=5, loss="mse", log_depth=False)
    h1 = train_head(samples, out_dim=1, config=config, task="depth")
    h2 = train_head(samples, out_dim=1, config=config, task="depth")
    assert np.array_equal(h1.weights, h2.weights)
    assert np.array_equal(h1.bias, h2.bias)


def test_head_save_load_roundtrip(tmp_path):
    rng = np.random.default_rng(18)
    head = LinearHead(
        weights=rng.standard_normal((2, 4)).astype(np.float32).astype(np.float64),
        bias=rng.standard_normal(2).astype(np.float32).astype(np.float64),
        task="segmentation",
        cls_concat=True,
        log_depth=False,
        source_layout="0.5:2:0;1:2:2",
    )
    save_head(tmp_path / "head", head)
    back = load_head(tmp_path / "head")
    assert np.array_equal(back.weights, head.weights)
    assert np.array_equal(back.bias, head.bias)
    assert back.task == head.task
    assert back.cls_concat and not back.log_depth
    assert back.source_layout == head.source_layout


def test_train_config_validation():
    with pytest.raises(DataError):
        TrainConfig(learning_rate=-1.0)
    with pytest.raises(DataError):
        TrainConfig(learning_rate=0.1, steps=0)
    with pytest.raises(DataError):
        TrainConfig(learning_rate=0.1, loss="hinge")
