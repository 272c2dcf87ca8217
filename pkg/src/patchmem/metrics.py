"""Threshold-free evaluation: best-threshold F1 and AUROC.

Classification metrics treat one score per image; segmentation metrics
pool every pixel of every map against the ground-truth masks. F1 is
reported at the best threshold found by sweeping the observed score
values (optionally capped to a quantile grid for pixel-level sweeps,
where distinct values can run into the millions).
"""

import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import InvalidInputError, UndefinedMetricError


def _check_labels(scores: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel().astype(bool)
    if s.shape != y.shape:
        raise InvalidInputError(
            f"{s.size} scores for {y.size} labels")
    if s.size == 0:
        raise UndefinedMetricError("no samples")
    if not np.isfinite(s).all():
        raise InvalidInputError("scores contain NaN or infinity")
    npos = int(y.sum())
    if npos == 0 or npos == y.size:
        raise UndefinedMetricError(
            f"labels are single-class ({npos} of {y.size} positive)")
    return s, y


def f1_max(scores, labels) -> tuple[float, float]:
    """Best F1 over all thresholds, predictions being score >= threshold.

    Returns (f1, threshold); among thresholds tied on F1 the lowest wins.
    """
    s, y = _check_labels(scores, labels)
    npos = int(y.sum())
    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    cum_tp = np.cumsum(y[order])
    # one candidate per distinct value: the last index of each run
    boundary = np.flatnonzero(np.diff(s_sorted) != 0)
    boundary = np.append(boundary, s_sorted.size - 1)
    tp = cum_tp[boundary]
    npred = boundary + 1
    f1 = 2.0 * tp / (npred + npos)
    best = np.flatnonzero(f1 == f1.max())[-1]  # descending order: last = lowest
    return float(f1[best]), float(s_sorted[boundary[best]])


def f1_max_capped(scores, labels, max_thresholds: int = 2000,
                  exact: bool = False) -> tuple[float, float]:
    """f1_max over a quantile grid of at most ``max_thresholds`` candidates.

    The capped sweep keeps pixel-level evaluation cheap; ``exact=True``
    falls back to the full sweep over every distinct value.
    """
    if max_thresholds < 2:
        raise InvalidInputError(
            f"need at least 2 thresholds, got {max_thresholds}")
    s, y = _check_labels(scores, labels)
    if exact or np.unique(s).size <= max_thresholds:
        return f1_max(s, y)
    npos = int(y.sum())
    cand = np.unique(np.quantile(s, np.linspace(0.0, 1.0, max_thresholds)))
    s_all = np.sort(s)
    s_pos = np.sort(s[y])
    npred = s_all.size - np.searchsorted(s_all, cand, side="left")
    tp = s_pos.size - np.searchsorted(s_pos, cand, side="left")
    f1 = 2.0 * tp / (npred + npos)
    best = np.flatnonzero(f1 == f1.max())[0]  # ascending order: first = lowest
    return float(f1[best]), float(cand[best])


def auroc(scores, labels) -> float:
    """Area under the ROC curve via midranks (ties share average rank)."""
    s, y = _check_labels(scores, labels)
    npos = int(y.sum())
    nneg = y.size - npos
    ranks = rankdata(s)
    u = ranks[y].sum() - npos * (npos + 1) / 2.0
    return float(u / (npos * nneg))


def _pool_pixels(score_maps, gt_masks) -> tuple[np.ndarray, np.ndarray]:
    if len(score_maps) != len(gt_masks):
        raise InvalidInputError(
            f"{len(score_maps)} maps for {len(gt_masks)} masks")
    if not score_maps:
        raise UndefinedMetricError("no maps")
    scores, labels = [], []
    for i, (m, g) in enumerate(zip(score_maps, gt_masks)):
        m = np.asarray(m, dtype=np.float64)
        g = np.asarray(g).astype(bool)
        if m.shape != g.shape:
            raise InvalidInputError(
                f"map {i} shape {m.shape} differs from mask shape {g.shape}")
        scores.append(m.ravel())
        labels.append(g.ravel())
    return np.concatenate(scores), np.concatenate(labels)


def f1_seg(score_maps, gt_masks, max_thresholds: int = 2000,
           exact: bool = False) -> tuple[float, float]:
    """Best pixel-level F1 pooled over all maps."""
    scores, labels = _pool_pixels(score_maps, gt_masks)
    return f1_max_capped(scores, labels, max_thresholds, exact)


def auroc_seg(score_maps, gt_masks) -> float:
    scores, labels = _pool_pixels(score_maps, gt_masks)
    return auroc(scores, labels)


@dataclass(frozen=True)
class EvalReport:
    images: int
    positives: int
    f1_classification: float
    threshold_classification: float
    auroc_classification: float
    f1_segmentation: float | None = None
    threshold_segmentation: float | None = None
    auroc_segmentation: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)


def evaluate(image_scores, image_labels, score_maps=None, gt_masks=None,
             max_thresholds: int = 2000, exact: bool = False) -> EvalReport:
    """Classification report, plus segmentation when masks are supplied."""
    s, y = _check_labels(image_scores, image_labels)
    f1_cls, thr_cls = f1_max(s, y)
    au_cls = auroc(s, y)
    f1_px = thr_px = au_px = None
    if score_maps is not None:
        if gt_masks is None:
            raise InvalidInputError("score maps supplied without masks")
        f1_px, thr_px = f1_seg(score_maps, gt_masks, max_thresholds, exact)
        au_px = auroc_seg(score_maps, gt_masks)
    return EvalReport(images=int(y.size), positives=int(y.sum()),
                      f1_classification=f1_cls,
                      threshold_classification=thr_cls,
                      auroc_classification=au_cls,
                      f1_segmentation=f1_px,
                      threshold_segmentation=thr_px,
                      auroc_segmentation=au_px)
