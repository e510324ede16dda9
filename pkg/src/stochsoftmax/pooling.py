"""Temporal pooling of clip logits into video-level logits."""

from __future__ import annotations

import numpy as np

CHANNELWISE = "channelwise"
PREDICTED = "predicted"


def _check_matrix(logits) -> np.ndarray:
    m = np.asarray(logits, dtype=np.float64)
    if m.ndim == 1:
        m = m[None, :]
    if m.ndim != 2 or m.shape[0] == 0 or m.shape[1] == 0:
        raise ValueError("empty logit matrix")
    if not np.all(np.isfinite(m)):
        raise ValueError("non-finite logit")
    return m


def log_softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    z = logits - logits.max(axis=axis, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


def cross_entropy(logits, label: int) -> float:
    z = np.asarray(logits, dtype=np.float64).reshape(-1)
    if not 0 <= label < z.size:
        raise ValueError(f"label {label} out of range for {z.size} classes")
    return float(-log_softmax(z)[label])


def softmax_pool(logits, gamma_pool: float, mode: str = CHANNELWISE) -> np.ndarray:
    """Softmax-weighted temporal pooling of an ``(N, C)`` logit matrix.

    In channelwise mode each class column is pooled under its own softmax
    weights, so ``gamma_pool=0`` gives the column mean and a very large
    ``gamma_pool`` the column max.  ``mode="predicted"`` instead weights every
    column by the softmax of the column that wins under average pooling.
    """
    m = _check_matrix(logits)
    if gamma_pool < 0:
        raise ValueError("gamma_pool must be nonnegative")
    if mode == CHANNELWISE:
        e = np.exp(gamma_pool * (m - m.max(axis=0)))
        p = e / e.sum(axis=0)
        return (p * m).sum(axis=0)
    if mode == PREDICTED:
        col = m[:, int(np.argmax(m.mean(axis=0)))]
        e = np.exp(gamma_pool * (col - col.max()))
        p = e / e.sum()
        return p @ m
    raise ValueError(f"unknown pooling mode {mode!r}")


def average_pool(logits) -> np.ndarray:
    return _check_matrix(logits).mean(axis=0)


def softmax_pool_segments(logits: np.ndarray, starts: np.ndarray, gamma_pool: float) -> np.ndarray:
    """Channelwise pooling of many videos stacked row-wise.

    ``starts`` holds the first row of each video (ascending, starts[0] == 0).
    Returns one pooled row per video.
    """
    m = np.asarray(logits, dtype=np.float64)
    starts = np.asarray(starts, dtype=np.intp)
    counts = np.diff(np.append(starts, m.shape[0]))
    if np.any(counts < 1):
        raise ValueError("empty logit matrix")
    col_max = np.maximum.reduceat(m, starts, axis=0)
    e = np.exp(gamma_pool * (m - np.repeat(col_max, counts, axis=0)))
    return np.add.reduceat(e * m, starts, axis=0) / np.add.reduceat(e, starts, axis=0)


def jensen_gap(logits, weights, label: int) -> tuple[float, float]:
    """Weighted mean of per-clip losses vs loss of the weighted mean logits.

    Cross-entropy is convex in the logits, so ``lhs >= rhs`` always.
    """
    m = _check_matrix(logits)
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    if w.shape[0] != m.shape[0]:
        raise ValueError("weights length does not match number of clips")
    if not 0 <= label < m.shape[1]:
        raise ValueError(f"label {label} out of range for {m.shape[1]} classes")
    per_clip = -log_softmax(m, axis=1)[:, label]
    lhs = float(w @ per_clip)
    rhs = cross_entropy(w @ m, label)
    return lhs, rhs
