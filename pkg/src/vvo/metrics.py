"""Segmentation metrics (ARI, ARI_fg, mIoU, mBO) and codebook usage statistics."""

from __future__ import annotations

import itertools

import numpy as np
from scipy.optimize import linear_sum_assignment

EXHAUSTIVE_LIMIT = 8


class MetricError(ValueError):
    pass


def _pair(predicted, truth):
    predicted = np.asarray(predicted)
    truth = np.asarray(truth)
    if predicted.shape != truth.shape:
        raise MetricError(f"shape mismatch {predicted.shape} vs {truth.shape}")
    if (predicted < 0).any() or (truth < 0).any():
        raise MetricError("labels must be nonnegative")
    return predicted.ravel().astype(np.int64), truth.ravel().astype(np.int64)


def contingency(predicted, truth) -> np.ndarray:
    """Counts of (truth label, predicted label) co-occurrence."""
    _, t_inv = np.unique(truth, return_inverse=True)
    _, p_inv = np.unique(predicted, return_inverse=True)
    table = np.zeros((t_inv.max() + 1, p_inv.max() + 1), dtype=np.int64)
    np.add.at(table, (t_inv, p_inv), 1)
    return table


def _comb2(x):
    x = np.asarray(x, dtype=object)
    return int(sum(int(v) * (int(v) - 1) // 2 for v in x.ravel()))


def ari(predicted, truth, foreground_only: bool = False) -> float:
    """Adjusted Rand index; ``foreground_only`` keeps pixels with ``truth > 0``.

    Both partitions trivial (one cluster each, or all singletons) scores 1.0.
    """
    p, t = _pair(predicted, truth)
    if foreground_only:
        keep = t > 0
        p, t = p[keep], t[keep]
    if p.size < 2:
        raise MetricError("ARI needs at least 2 pixels after filtering")
    table = contingency(p, t)
    index = _comb2(table)
    sum_t = _comb2(table.sum(axis=1))
    sum_p = _comb2(table.sum(axis=0))
    pairs = p.size * (p.size - 1) // 2
    # (index - sa*sb/N) / ((sa+sb)/2 - sa*sb/N), scaled to integers so only the
    # final division rounds
    num = 2 * (pairs * index - sum_t * sum_p)
    den = pairs * (sum_t + sum_p) - 2 * sum_t * sum_p
    if den == 0:
        return 1.0
    return num / den


def ari_fg(predicted, truth) -> float:
    return ari(predicted, truth, foreground_only=True)


def _iou_matrix(predicted, truth):
    p, t = _pair(predicted, truth)
    objects = np.unique(t[t > 0])
    if objects.size == 0:
        raise MetricError("truth has no objects")
    pred_ids = np.unique(p)
    t_masks = t[None, :] == objects[:, None]
    p_masks = p[None, :] == pred_ids[:, None]
    inter = t_masks.astype(np.int64) @ p_masks.T.astype(np.int64)
    union = t_masks.sum(1)[:, None] + p_masks.sum(1)[None, :] - inter
    return inter / union


def _best_assignment(iou: np.ndarray) -> float:
    n_t, n_p = iou.shape
    if max(n_t, n_p) <= EXHAUSTIVE_LIMIT:
        best = 0.0
        if n_t <= n_p:
            for cols in itertools.permutations(range(n_p), n_t):
                best = max(best, float(iou[np.arange(n_t), cols].sum()))
        else:
            for rows in itertools.permutations(range(n_t), n_p):
                best = max(best, float(iou[rows, np.arange(n_p)].sum()))
        return best
    rows, cols = linear_sum_assignment(iou, maximize=True)
    return float(iou[rows, cols].sum())


def miou(predicted, truth) -> float:
    """Mean IoU over truth objects under the best one-to-one mask assignment.

    Unmatched truth objects score 0.
    """
    iou = _iou_matrix(predicted, truth)
    return _best_assignment(iou) / iou.shape[0]


def mbo(predicted, truth) -> float:
    """Mean over truth objects of the best IoU with any predicted mask."""
    iou = _iou_matrix(predicted, truth)
    return float(iou.max(axis=1).mean())


def segmentation_scores(predicted, truth) -> dict[str, float]:
    return {
        "ari": ari(predicted, truth),
        "ari_fg": ari(predicted, truth, foreground_only=True),
        "miou": miou(predicted, truth),
        "mbo": mbo(predicted, truth),
    }


def code_usage_stats(index_grids, m: int) -> dict:
    """Number of used codes and coefficient of variation of their usage counts."""
    grids = [np.asarray(g).ravel() for g in index_grids]
    if not grids or sum(g.size for g in grids) == 0:
        raise MetricError("no indices given")
    flat = np.concatenate(grids)
    if flat.min() < 0 or flat.max() >= m:
        raise MetricError(f"indices outside [0, {m})")
    hist = np.bincount(flat, minlength=m)
    used = hist[hist > 0].astype(np.float64)
    return {"unique_codes": int(used.size), "usage_cv": float(used.std() / used.mean())}
