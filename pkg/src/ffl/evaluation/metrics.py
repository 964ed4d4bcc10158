"""Threshold-free and threshold-based binary metrics on one label."""
from __future__ import annotations

import numpy as np
from scipy.stats import rankdata


class UndefinedMetricError(ValueError):
    """The metric needs both classes present and got only one."""


def _as_binary(scores, labels):
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel()
    if s.shape != y.shape:
        raise ValueError(f"scores {s.shape} and labels {y.shape} differ in length")
    if s.size == 0:
        raise ValueError("empty input")
    if not np.all(np.isfinite(s)):
        raise ValueError("scores must be finite")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    return s, y.astype(bool)


def _need_both(y):
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == y.size:
        raise UndefinedMetricError("need at least one positive and one negative")
    return n_pos, y.size - n_pos


def auroc(scores, labels) -> float:
    """Mann-Whitney AUROC: P(score_pos > score_neg) with ties counted one half."""
    s, y = _as_binary(scores, labels)
    n_pos, n_neg = _need_both(y)
    ranks = rankdata(s)  # average ranks: ties share (2k+1)/2 values
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def youden_index(scores, labels):
    """``(threshold, J)`` maximizing ``TPR - FPR`` under the rule ``score >= t``.

    Candidates are the distinct observed scores; ties in J go to the smallest
    threshold.
    """
    s, y = _as_binary(scores, labels)
    n_pos, n_neg = _need_both(y)
    cand = np.unique(s)
    pos = np.sort(s[y])
    neg = np.sort(s[~y])
    tp = n_pos - np.searchsorted(pos, cand, side="left")
    fp = n_neg - np.searchsorted(neg, cand, side="left")
    j = tp / n_pos - fp / n_neg
    best = int(np.argmax(j))
    return float(cand[best]), float(j[best])


def youden_threshold(scores, labels) -> float:
    return youden_index(scores, labels)[0]


def confusion_metrics(scores, labels, t: float):
    """``(accuracy, sensitivity, specificity)`` for predictions ``score >= t``.

    A rate whose denominator is empty (no positives, or no negatives) is NaN.
    """
    s, y = _as_binary(scores, labels)
    pred = s >= t
    tp = int(np.sum(pred & y))
    tn = int(np.sum(~pred & ~y))
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    acc = (tp + tn) / y.size
    sens = tp / n_pos if n_pos else float("nan")
    spec = tn / n_neg if n_neg else float("nan")
    return float(acc), float(sens), float(spec)


def roc_curve(scores, labels):
    """Raw ROC points ``(fpr, tpr, thresholds)``, thresholds descending, starting at (0, 0)."""
    s, y = _as_binary(scores, labels)
    n_pos, n_neg = _need_both(y)
    cand = np.unique(s)[::-1]
    pos = np.sort(s[y])
    neg = np.sort(s[~y])
    tpr = (n_pos - np.searchsorted(pos, cand, side="left")) / n_pos
    fpr = (n_neg - np.searchsorted(neg, cand, side="left")) / n_neg
    return (
        np.concatenate([[0.0], fpr]),
        np.concatenate([[0.0], tpr]),
        np.concatenate([[np.inf], cand]),
    )
