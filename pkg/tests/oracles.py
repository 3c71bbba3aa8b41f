"""Brute-force reference implementations the test suite checks against.

Everything here is deliberately naive (double loops, flood fill, power
iteration) and independent of the library code paths it verifies.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1


def splitmix64_ref(x: int) -> int:
    z = (x + 0x9E3779B97F4B7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return (z ^ (z >> 31)) & MASK64


def toy_weight_ref(seed: int, k: int, j: int) -> float:
    state = (seed ^ ((k * 1000003 + j) & MASK64)) & MASK64
    return 2.0 * (splitmix64_ref(state) / 2.0**64) - 1.0


def bilinear_ref(src: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    src = np.asarray(src, dtype=np.float64)
    if src.ndim == 2:
        src = src[:, :, None]
        squeeze = True
    else:
        squeeze = False
    h, w, c = src.shape
    out = np.zeros((out_h, out_w, c))
    for i in range(out_h):
        y = i * (h - 1) / (out_h - 1) if out_h > 1 else 0.0
        y0 = int(np.floor(y))
        y1 = min(y0 + 1, h - 1)
        wy = y - y0
        for j in range(out_w):
            x = j * (w - 1) / (out_w - 1) if out_w > 1 else 0.0
            x0 = int(np.floor(x))
            x1 = min(x0 + 1, w - 1)
            wx = x - x0
            out[i, j] = (
                src[y0, x0] * (1 - wy) * (1 - wx)
                + src[y0, x1] * (1 - wy) * wx
                + src[y1, x0] * wy * (1 - wx)
                + src[y1, x1] * wy * wx
            )
    return out[:, :, 0] if squeeze else out


def nn_distances_ref(bank: np.ndarray, queries: np.ndarray) -> np.ndarray:
    out = np.zeros(len(queries))
    for i, q in enumerate(queries):
        best = np.inf
        for m in bank:
            d = float(np.sqrt(np.sum((np.asarray(q, float) - np.asarray(m, float)) ** 2)))
            best = min(best, d)
        out[i] = best
    return out


def k_center_steps_ref(points: np.ndarray, count: int) -> list[int]:
    """Selection order of greedy farthest-point sampling starting at index 0."""
    pts = np.asarray(points, dtype=np.float64)
    selected = [0]
    for _ in range(count - 1):
        best_idx, best_dist = None, -1.0
        for i in range(len(pts)):
            dmin = min(float(np.linalg.norm(pts[i] - pts[s])) for s in selected)
            if dmin > best_dist:
                best_idx, best_dist = i, dmin
        selected.append(best_idx)
    return selected


def _regions_ref(mask: np.ndarray) -> list[np.ndarray]:
    """8-connected components via flood fill; each is a boolean mask."""
    mask = np.asarray(mask) > 0
    seen = np.zeros_like(mask, dtype=bool)
    regions = []
    h, w = mask.shape
    for sy in range(h):
        for sx in range(w):
            if not mask[sy, sx] or seen[sy, sx]:
                continue
            region = np.zeros_like(mask)
            stack = [(sy, sx)]
            seen[sy, sx] = True
            while stack:
                y, x = stack.pop()
                region[y, x] = True
                for dy in (-1, 0, 1):
                    for dx in (-1, 0, 1):
                        ny, nx = y + dy, x + dx
                        if 0 <= ny < h and 0 <= nx < w and mask[ny, nx] and not seen[ny, nx]:
                            seen[ny, nx] = True
                            stack.append((ny, nx))
            regions.append(region)
    return regions


def au_pro_ref(score_maps, gt_masks, fpr_limit: float = 0.05) -> float:
    """Exhaustive-threshold AU-PRO with trapezoid integration to the limit."""
    if isinstance(score_maps, np.ndarray) and score_maps.ndim == 2:
        score_maps = [score_maps]
        gt_masks = [gt_masks]
    regions = []
    neg = []
    all_scores = []
    for scores, mask in zip(score_maps, gt_masks):
        scores = np.asarray(scores, dtype=np.float64)
        mask = np.asarray(mask) > 0
        for region in _regions_ref(mask):
            regions.append(scores[region])
        neg.append(scores[~mask])
        all_scores.append(scores.ravel())
    neg = np.concatenate(neg)
    thresholds = np.unique(np.concatenate(all_scores))[::-1]

    points = [(0.0, 0.0)]
    for t in thresholds:
        fpr = float(np.mean(neg >= t))
        pro = float(np.mean([np.mean(r >= t) for r in regions]))
        points.append((fpr, pro))

    area = 0.0
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        if x1 <= fpr_limit:
            area += 0.5 * (y0 + y1) * (x1 - x0)
        else:
            if x0 < fpr_limit:
                y_at = y1 if x1 == x0 else y0 + (y1 - y0) * (fpr_limit - x0) / (x1 - x0)
                area += 0.5 * (y0 + y_at) * (fpr_limit - x0)
            break
    return area / fpr_limit


def top_components_power_ref(x: np.ndarray, k: int, iters: int = 2000) -> np.ndarray:
    """Top-k principal directions of centered data via power iteration + deflation."""
    xc = np.asarray(x, dtype=np.float64)
    xc = xc - xc.mean(axis=0)
    cov = xc.T @ xc / max(len(xc) - 1, 1)
    comps = []
    for c in range(k):
        rng = np.random.default_rng(1234 + c)
        v = rng.standard_normal(cov.shape[0])
        v /= np.linalg.norm(v)
        for _ in range(iters):
            v = cov @ v
            n = np.linalg.norm(v)
            if n == 0:
                break
            v /= n
        comps.append(v.copy())
        lam = float(v @ cov @ v)
        cov = cov - lam * np.outer(v, v)
    return np.stack(comps)


def least_squares_rmse_ref(x: np.ndarray, y: np.ndarray) -> float:
    """RMSE of the closed-form least-squares affine fit of y on x."""
    xa = np.concatenate([np.asarray(x, float), np.ones((len(x), 1))], axis=1)
    coef, *_ = np.linalg.lstsq(xa, np.asarray(y, float), rcond=None)
    resid = xa @ coef - y
    return float(np.sqrt(np.mean(resid**2)))
