"""Video-level classification metrics."""

from __future__ import annotations

import numpy as np
from scipy.stats import rankdata


def accuracy(pred, labels) -> float:
    pred = np.asarray(pred)
    labels = np.asarray(labels)
    if pred.shape != labels.shape or pred.size == 0:
        raise ValueError("need equally sized, nonempty prediction and label arrays")
    return float(np.mean(pred == labels))


def _binary(scores, labels):
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels).reshape(-1)
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    if not np.all(np.isin(y, (0, 1))):
        raise ValueError("binary metrics need labels in {0, 1}")
    n_pos = int(np.sum(y == 1))
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("binary metrics need both classes present")
    return s, y, n_pos, n_neg


def roc_auc(scores, labels) -> float:
    """Probability that a positive outscores a negative, ties counted half.

    Computed from mid-ranks (Mann-Whitney U), equivalent to pair counting.
    """
    s, y, n_pos, n_neg = _binary(scores, labels)
    ranks = rankdata(s)  # average ranks for ties
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def roc_curve(scores, labels):
    """ROC points (fpr, tpr) over all distinct thresholds, from (0,0) to (1,1)."""
    s, y, n_pos, n_neg = _binary(scores, labels)
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    # last index of each run of tied scores
    cut = np.r_[np.nonzero(np.diff(s))[0], s.size - 1]
    tp = np.cumsum(y == 1)[cut]
    fp = np.cumsum(y == 0)[cut]
    tpr = np.r_[0.0, tp / n_pos]
    fpr = np.r_[0.0, fp / n_neg]
    return fpr, tpr


def equal_error_rate(scores, labels) -> float:
    """Rate where the false-positive and false-negative rates cross.

    The crossing is located by linear interpolation between ROC points.
    """
    fpr, tpr = roc_curve(scores, labels)
    fnr = 1.0 - tpr
    diff = fpr - fnr  # rises from -1 to +1 along the curve
    i = int(np.nonzero(diff >= 0)[0][0])
    if diff[i] == 0 or i == 0:
        return float(fpr[i])
    # crossing between points i-1 and i
    a = -diff[i - 1] / (diff[i] - diff[i - 1])
    return float(fpr[i - 1] + a * (fpr[i] - fpr[i - 1]))


def eer_accuracy(scores, labels) -> float:
    """Accuracy at the EER operating point, where both error rates equal EER."""
    return 1.0 - equal_error_rate(scores, labels)
