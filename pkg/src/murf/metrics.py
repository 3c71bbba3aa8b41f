"""Evaluation metrics: mIoU, RMSE, and AU-PRO with a capped FPR.

AU-PRO sweeps every unique pooled score as a threshold (pixels count as
positive when score >= threshold). Defect regions are 8-connected
components of the ground-truth masks; PRO averages per-region overlap over
all regions of all evaluated images while FPR pools negatives globally.
The curve gets a (0, 0) anchor and is trapezoid-integrated up to the FPR
limit (linear interpolation at the cutoff), then normalized by the limit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import label as cc_label

from .errors import DataError, ShapeError

_EIGHT_CONNECTED = np.ones((3, 3), dtype=int)


def miou(pred_mask, gt_mask, num_classes: int, ignore_label: int | None = None) -> float:
    """Mean intersection-over-union in percent.

    Pixels whose ground truth equals ``ignore_label`` are excluded; classes
    absent from both prediction and ground truth do not enter the mean.
    """
    pred = np.asarray(pred_mask)
    gt = np.asarray(gt_mask)
    if pred.shape != gt.shape:
        raise ShapeError(f"shape mismatch {pred.shape} vs {gt.shape}")
    valid = np.ones(gt.shape, dtype=bool)
    if ignore_label is not None:
        valid = gt != ignore_label
    pred = pred[valid]
    gt = gt[valid]
    ious = []
    for cls in range(num_classes):
        p = pred == cls
        g = gt == cls
        union = int(np.sum(p | g))
        if union == 0:
            continue
        ious.append(np.sum(p & g) / union)
    if not ious:
        raise DataError("no classes present in prediction or ground truth")
    return 100.0 * float(np.mean(ious))


def rmse(pred_depth, gt_depth, valid_mask=None) -> float:
    """Root mean squared error over valid pixels."""
    pred = np.asarray(pred_depth, dtype=np.float64)
    gt = np.asarray(gt_depth, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ShapeError(f"shape mismatch {pred.shape} vs {gt.shape}")
    if valid_mask is not None:
        mask = np.asarray(valid_mask, dtype=bool)
        if mask.shape != gt.shape:
            raise ShapeError(f"mask shape {mask.shape} != {gt.shape}")
        pred = pred[mask]
        gt = gt[mask]
    if pred.size == 0:
        raise DataError("no valid pixels")
    return float(np.sqrt(np.mean((pred - gt) ** 2)))


@dataclass(frozen=True)
class ProCurve:
    """Per-region-overlap curve: (fpr, pro) points sorted by fpr, plus its cap."""

    fprs: np.ndarray
    pros: np.ndarray
    integration_limit: float = 0.05

    def area(self) -> float:
        return _area_to_limit(self.fprs, self.pros, self.integration_limit)


def _as_map_list(maps) -> list[np.ndarray]:
    if isinstance(maps, np.ndarray) and maps.ndim == 2:
        return [maps]
    return [np.asarray(m) for m in maps]


def pro_curve(score_maps, gt_masks, integration_limit: float = 0.05) -> ProCurve:
    """Build the pooled PRO-vs-FPR curve over one or more images."""
    smaps = _as_map_list(score_maps)
    gmaps = _as_map_list(gt_masks)
    if len(smaps) != len(gmaps):
        raise DataError(f"{len(smaps)} score maps but {len(gmaps)} masks")

    region_scores: list[np.ndarray] = []
    neg_scores: list[np.ndarray] = []
    for scores, mask in zip(smaps, gmaps):
        scores = np.asarray(scores, dtype=np.float64)
        mask = np.asarray(mask) > 0
        if scores.shape != mask.shape:
            raise ShapeError(f"shape mismatch {scores.shape} vs {mask.shape}")
        if not np.all(np.isfinite(scores)):
            raise DataError("score map contains non-finite values")
        labeled, n_regions = cc_label(mask, structure=_EIGHT_CONNECTED)
        for r in range(1, n_regions + 1):
            region_scores.append(np.sort(scores[labeled == r]))
        neg_scores.append(scores[~mask])
    if not region_scores:
        raise DataError("no defect regions in ground truth")
    negatives = np.sort(np.concatenate(neg_scores))
    if negatives.size == 0:
        raise DataError("no negative pixels")

    pooled = np.concatenate([np.concatenate(region_scores), negatives])
    thresholds = np.unique(pooled)[::-1]  # descending

    fprs = (negatives.size - np.searchsorted(negatives, thresholds, side="left")) / negatives.size
    pro_sum = np.zeros(thresholds.size)
    for region in region_scores:
        hits = region.size - np.searchsorted(region, thresholds, side="left")
        pro_sum += hits / region.size
    pros = pro_sum / len(region_scores)

    fprs = np.concatenate([[0.0], fprs])
    pros = np.concatenate([[0.0], pros])
    return ProCurve(fprs=fprs, pros=pros, integration_limit=integration_limit)


def au_pro(score_maps, gt_masks, fpr_limit: float = 0.05) -> float:
    """Area under the PRO curve up to ``fpr_limit``, normalized to [0, 1]."""
    if not 0.0 < fpr_limit <= 1.0:
        raise DataError(f"fpr limit {fpr_limit} outside (0, 1]")
    return pro_curve(score_maps, gt_masks, fpr_limit).area()


def _area_to_limit(fprs: np.ndarray, pros: np.ndarray, limit: float) -> float:
    cut = int(np.searchsorted(fprs, limit, side="right"))
    xs = fprs[:cut]
    ys = pros[:cut]
    if cut < fprs.size and (xs.size == 0 or xs[-1] < limit):
        x0, x1 = fprs[cut - 1], fprs[cut]
        y0, y1 = pros[cut - 1], pros[cut]
        y_at = y1 if x1 == x0 else y0 + (y1 - y0) * (limit - x0) / (x1 - x0)
        xs = np.concatenate([xs, [limit]])
        ys = np.concatenate([ys, [y_at]])
    if xs.size < 2:
        return 0.0
    return float(np.trapezoid(ys, xs) / limit)
