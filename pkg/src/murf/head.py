"""Per-position linear heads over frozen fused features.

The head is the only trainable component: an affine map applied at every
grid position (equivalently a 1x1 convolution), trained with plain SGD.
Segmentation uses softmax cross-entropy against nearest-downsampled label
grids; depth uses MSE, by default in log space with an exp readout so
predicted depths stay positive.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, NonFiniteLossError, ShapeError
from .fusion import FusedFeatureMap
from .pyramid import resize_bilinear
from .tensorio import read_tensor, write_tensor


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float
    steps: int = 10000
    batch: int = 64
    seed: int = 0
    loss: str = "cross_entropy"  # or "mse"
    cls_concat: bool = False
    log_depth: bool = True

    def __post_init__(self):
        if self.learning_rate < 0:
            raise DataError("learning rate must be >= 0")
        if self.steps < 1:
            raise DataError("steps must be >= 1")
        if self.loss not in ("cross_entropy", "mse"):
            raise DataError(f"unknown loss {self.loss!r}")


@dataclass(frozen=True)
class LinearHead:
    weights: np.ndarray  # (out_dim, in_dim)
    bias: np.ndarray  # (out_dim,)
    task: str  # "segmentation" or "depth"
    cls_concat: bool = False
    log_depth: bool = True
    source_layout: str = ""

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]


def features_matrix(fused: FusedFeatureMap, cls_concat: bool) -> np.ndarray:
    """(H, W, in_dim) input to the head; optionally appends broadcast CLS tokens."""
    base = fused.data
    if not cls_concat:
        return base
    if len(fused.global_tokens) != len(fused.blocks):
        raise DataError("cls_concat requires a global token for every fused scale")
    h, w = base.shape[:2]
    tokens = np.concatenate([t for _, t in sorted(fused.global_tokens, key=lambda p: p[0])])
    broadcast = np.broadcast_to(tokens.astype(base.dtype), (h, w, tokens.size))
    return np.concatenate([base, broadcast], axis=2)


def head_forward(head: LinearHead, fused: FusedFeatureMap) -> np.ndarray:
    """Apply the head at every grid position, returning (H, W, out_dim)."""
    feats = features_matrix(fused, head.cls_concat)
    if feats.shape[2] != head.in_dim:
        raise ShapeError(
            f"feature dim {feats.shape[2]} != head input dim {head.in_dim}"
        )
    return feats.astype(np.float64) @ head.weights.T + head.bias


def upsample_prediction(pred, out_h: int, out_w: int, task: str) -> np.ndarray:
    """Bilinearly upsample a prediction grid to pixels.

    Segmentation upsamples logits then takes a per-pixel argmax (ties go to
    the lowest class index); depth returns the upsampled scalar map.
    """
    pred = np.asarray(pred)
    if task == "segmentation":
        logits = resize_bilinear(pred, out_h, out_w)
        if logits.ndim == 2:
            logits = logits[:, :, None]
        return np.argmax(logits, axis=2)
    if task == "depth":
        grid = pred[:, :, 0] if pred.ndim == 3 else pred
        return resize_bilinear(grid, out_h, out_w)
    raise DataError(f"unknown task {task!r}")


def depth_readout(pred, log_depth: bool) -> np.ndarray:
    return np.exp(pred) if log_depth else np.asarray(pred)


def nearest_downsample(labels, grid_h: int, grid_w: int) -> np.ndarray:
    """Nearest-neighbor downsample of a label/target map to the feature grid."""
    labels = np.asarray(labels)
    h, w = labels.shape[:2]
    ys = _nearest_coords(h, grid_h)
    xs = _nearest_coords(w, grid_w)
    return labels[np.ix_(ys, xs)]


def _nearest_coords(src_len: int, out_len: int) -> np.ndarray:
    if out_len == 1:
        return np.zeros(1, dtype=np.intp)
    coords = np.arange(out_len, dtype=np.float64) * ((src_len - 1) / (out_len - 1))
    return np.floor(coords + 0.5).astype(np.intp)


def loss_and_grad(weights, bias, x, y, loss: str):
    """Loss and analytic gradients for a batch.

    ``x`` is (n, in_dim); for cross_entropy ``y`` is (n,) int labels, for
    mse ``y`` is (n, out_dim) targets.
    """
    z = x @ weights.T + bias
    n = x.shape[0]
    if loss == "cross_entropy":
        shifted = z - z.max(axis=1, keepdims=True)
        expz = np.exp(shifted)
        probs = expz / expz.sum(axis=1, keepdims=True)
        value = -np.mean(shifted[np.arange(n), y] - np.log(expz.sum(axis=1)))
        dz = probs
        dz[np.arange(n), y] -= 1.0
        dz /= n
    elif loss == "mse":
        diff = z - y
        value = np.mean(diff**2)
        dz = 2.0 * diff / diff.size
    else:
        raise DataError(f"unknown loss {loss!r}")
    return value, dz.T @ x, dz.sum(axis=0)


def train_head(samples, out_dim: int, config: TrainConfig, task: str) -> LinearHead:
    """Train a linear head on (FusedFeatureMap, target-grid) samples.

    Targets are per-grid-position: int class labels for segmentation,
    positive depths for depth (regressed in log space when
    ``config.log_depth``). Deterministic given the config seed.
    """
    xs, ys = [], []
    layout = ""
    for fused, target in samples:
        feats = features_matrix(fused, config.cls_concat)
        target = np.asarray(target)
        if target.shape[:2] != feats.shape[:2]:
            raise ShapeError(
                f"target grid {target.shape[:2]} != feature grid {feats.shape[:2]}"
            )
        xs.append(feats.reshape(-1, feats.shape[2]).astype(np.float64))
        ys.append(target.reshape(target.shape[0] * target.shape[1], -1))
        layout = fused.layout()
    if not xs:
        raise DataError("no training samples")
    x = np.concatenate(xs)
    yflat = np.concatenate(ys)

    if task == "segmentation":
        loss_kind = "cross_entropy"
        y = yflat[:, 0].astype(np.intp)
        if y.min() < 0 or y.max() >= out_dim:
            raise DataError(f"labels outside [0, {out_dim})")
    elif task == "depth":
        loss_kind = "mse"
        y = yflat.astype(np.float64)
        if config.log_depth:
            if np.any(y <= 0):
                raise DataError("log-depth training requires strictly positive targets")
            y = np.log(y)
    else:
        raise DataError(f"unknown task {task!r}")
    if config.loss != loss_kind:
        raise DataError(f"loss {config.loss!r} does not match task {task!r}")

    n, in_dim = x.shape
    weights = np.zeros((out_dim, in_dim))
    bias = np.zeros(out_dim)
    rng = np.random.default_rng(config.seed)
    full_batch = config.batch >= n
    for step in range(config.steps):
        if full_batch:
            bx, by = x, y
        else:
            idx = rng.integers(0, n, size=config.batch)
            bx, by = x[idx], y[idx]
        value, gw, gb = loss_and_grad(weights, bias, bx, by, loss_kind)
        if not np.isfinite(value):
            raise NonFiniteLossError(
                f"loss became {value} at step {step} (lr={config.learning_rate})"
            )
        weights = weights - config.learning_rate * gw
        bias = bias - config.learning_rate * gb
    return LinearHead(
        weights=weights,
        bias=bias,
        task=task,
        cls_concat=config.cls_concat,
        log_depth=config.log_depth,
        source_layout=layout,
    )


def save_head(out_dir: str | Path, head: LinearHead) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_tensor(out_dir / "weights.mrft", head.weights)
    write_tensor(out_dir / "bias.mrft", head.bias)
    meta = [
        f"in_dim={head.in_dim}",
        f"out_dim={head.out_dim}",
        f"task={head.task}",
        f"cls_concat={int(head.cls_concat)}",
        f"log_depth={int(head.log_depth)}",
        f"layout_hash={hashlib.sha256(head.source_layout.encode()).hexdigest()}",
        f"layout={head.source_layout}",
    ]
    (out_dir / "head.txt").write_text("\n".join(meta) + "\n")


def load_head(out_dir: str | Path) -> LinearHead:
    out_dir = Path(out_dir)
    meta_path = out_dir / "head.txt"
    if not meta_path.exists():
        raise DataError(f"missing head metadata {meta_path}")
    meta = dict(
        line.split("=", 1)
        for line in meta_path.read_text().splitlines()
        if "=" in line
    )
    weights = read_tensor(out_dir / "weights.mrft").astype(np.float64)
    bias = read_tensor(out_dir / "bias.mrft").astype(np.float64)
    if weights.shape != (int(meta["out_dim"]), int(meta["in_dim"])):
        raise ShapeError("head weights do not match recorded dims")
    return LinearHead(
        weights=weights,
        bias=bias,
        task=meta["task"],
        cls_concat=bool(int(meta.get("cls_concat", "0"))),
        log_depth=bool(int(meta.get("log_depth", "1"))),
        source_layout=meta.get("layout", ""),
    )
