"""One-vs-rest discrimination metrics, bootstrap CIs, and operating points."""

from __future__ import annotations

import numpy as np
from scipy.stats import rankdata

from .errors import (DegenerateResampling, MisalignedCutoff, OneClassOnly)

# class index boundaries: classes entirely below an LVEF cutoff
_CUTOFF_CLASSES = {30.0: (0,), 40.0: (0, 1), 50.0: (0, 1, 2)}


def auroc(scores: np.ndarray, positives: np.ndarray) -> float:
    """Mann-Whitney AUROC with ties credited 0.5."""
    scores = np.asarray(scores, dtype=np.float64)
    positives = np.asarray(positives, dtype=bool)
    n_pos = int(positives.sum())
    n_neg = len(positives) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise OneClassOnly("need both positive and negative examples")
    ranks = rankdata(scores)
    u = ranks[positives].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def auroc_ovr(scores: np.ndarray, labels: np.ndarray, k: int) -> float:
    """One-vs-rest AUROC of class k given its per-example scores."""
    labels = np.asarray(labels)
    return auroc(scores, labels == k)


def roc_curve(scores: np.ndarray, positives: np.ndarray
              ) -> list[tuple[float, float, float]]:
    """(fpr, tpr, threshold) points from (0,0) to (1,1), rule score >= t."""
    scores = np.asarray(scores, dtype=np.float64)
    positives = np.asarray(positives, dtype=bool)
    n_pos = positives.sum()
    n_neg = len(positives) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise OneClassOnly("need both classes for a ROC curve")
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    tp = np.cumsum(positives[order])
    fp = np.cumsum(~positives[order])
    # collapse tied thresholds to their last occurrence
    distinct = np.r_[sorted_scores[1:] != sorted_scores[:-1], True]
    points = [(0.0, 0.0, float("inf"))]
    for i in np.flatnonzero(distinct):
        points.append((float(fp[i] / n_neg), float(tp[i] / n_pos),
                       float(sorted_scores[i])))
    return points


def bootstrap_ci(metric, n: int, B: int = 1000, alpha: float = 0.05,
                 seed: int = 0, max_redraws: int = 10
                 ) -> tuple[float, float]:
    """Percentile bootstrap interval over with-replacement resamples.

    ``metric`` is called with an index array into the evaluation set and
    must return a scalar; it may raise OneClassOnly, in which case the
    resample is redrawn (at most ``max_redraws`` times). Child seeds are
    derived per resample, so results are schedule-independent.
    """
    if B < 2:
        raise ValueError("B must be >= 2")
    children = np.random.SeedSequence(seed).spawn(B)
    values = np.empty(B)
    for b in range(B):
        rng = np.random.default_rng(children[b])
        for attempt in range(max_redraws + 1):
            idx = rng.integers(0, n, size=n)
            try:
                values[b] = metric(idx)
                break
            except OneClassOnly:
                if attempt == max_redraws:
                    raise DegenerateResampling(
                        f"resample {b} degenerate after {max_redraws} redraws")
    lo, hi = np.percentile(values, [100 * alpha / 2, 100 * (1 - alpha / 2)])
    return float(lo), float(hi)


def _f1_at(scores, positives, t):
    pred = scores >= t
    tp = int(np.sum(pred & positives))
    fp = int(np.sum(pred & ~positives))
    fn = int(np.sum(~pred & positives))
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def select_f1_threshold(scores: np.ndarray, labels: np.ndarray,
                        k: int) -> float:
    """Threshold (from observed scores plus an above-max sentinel)
    maximizing one-vs-rest F1 of the rule score >= t; ties take the
    largest threshold."""
    scores = np.asarray(scores, dtype=np.float64)
    positives = np.asarray(labels) == k
    if positives.all() or not positives.any():
        if positives.all():
            # predict everything positive
            return float(scores.min())
        raise OneClassOnly("need both classes to tune a threshold")
    candidates = np.unique(scores)
    candidates = np.r_[candidates, candidates[-1] + 1.0]
    best_t, best_f1 = None, -1.0
    for t in candidates:
        f1 = _f1_at(scores, positives, t)
        if f1 >= best_f1:  # >= keeps the largest threshold on ties
            best_f1, best_t = f1, float(t)
    return best_t


def threshold_metrics(scores: np.ndarray, labels: np.ndarray, k: int,
                      threshold: float) -> tuple[float, float, float]:
    """(F1, sensitivity, specificity) of the rule score >= threshold.

    Zero-denominator metrics are NaN."""
    scores = np.asarray(scores, dtype=np.float64)
    positives = np.asarray(labels) == k
    pred = scores >= threshold
    tp = int(np.sum(pred & positives))
    fp = int(np.sum(pred & ~positives))
    fn = int(np.sum(~pred & positives))
    tn = int(np.sum(~pred & ~positives))
    sens = tp / (tp + fn) if tp + fn else float("nan")
    spec = tn / (tn + fp) if tn + fp else float("nan")
    f1 = 2 * tp / (2 * tp + fp + fn) if 2 * tp + fp + fn else float("nan")
    return f1, sens, spec


def binary_auc_at_cutoff(proba: np.ndarray, lvef: np.ndarray,
                         cutoff: float) -> float:
    """AUROC of the binary outcome lvef < cutoff, scored by the summed
    probability of all classes entirely below the cutoff. The cutoff must
    align with a class boundary (30, 40, or 50)."""
    if float(cutoff) not in _CUTOFF_CLASSES:
        raise MisalignedCutoff(f"cutoff {cutoff} is not a class boundary")
    proba = np.asarray(proba, dtype=np.float64)
    lvef = np.asarray(lvef, dtype=np.float64)
    classes = _CUTOFF_CLASSES[float(cutoff)]
    score = proba[:, list(classes)].sum(axis=1)
    return auroc(score, lvef < cutoff)
