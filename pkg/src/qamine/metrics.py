"""Binary classification metrics: AUC, accuracy/F1 and precision-recall curves."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateLabels, NoPositives


def _arrays(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel().astype(bool)
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    if not np.all(np.isfinite(s)):
        raise ValueError("scores must be finite")
    return s, y


def auc(scores, labels) -> float:
    """Mann-Whitney AUC with half credit for tied pos/neg pairs.

    Computed from average ranks, so it is exact for any tie pattern.
    """
    s, y = _arrays(scores, labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabels("AUC needs both positive and negative labels")
    order = np.argsort(s, kind="mergesort")
    s_sorted = s[order]
    # average 1-based rank per tie group
    starts = np.flatnonzero(np.r_[True, s_sorted[1:] != s_sorted[:-1]])
    ends = np.r_[starts[1:], s.size]
    avg = (starts + ends + 1) / 2.0
    ranks = np.empty(s.size)
    ranks[order] = np.repeat(avg, ends - starts)
    # twice the U statistic stays integral, avoiding .5 rounding
    u2 = 2.0 * ranks[y].sum() - n_pos * (n_pos + 1)
    return float(u2 / (2.0 * n_pos * n_neg))


def acc_f1(scores, labels, threshold: float = 0.5) -> tuple[float, float]:
    s, y = _arrays(scores, labels)
    if s.size == 0:
        raise ValueError("acc_f1 needs at least one item")
    pred = s >= threshold
    tp = int(np.sum(pred & y))
    fp = int(np.sum(pred & ~y))
    fn = int(np.sum(~pred & y))
    acc = float(np.mean(pred == y))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return acc, f1


@dataclass(frozen=True, slots=True)
class PRPoint:
    threshold: float
    precision: float
    recall: float


def pr_curve(scores, labels) -> list[PRPoint]:
    """One point per distinct score, thresholds descending.

    At threshold t the predicted positives are the items with score >= t.
    """
    s, y = _arrays(scores, labels)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise NoPositives("precision-recall curve needs a positive label")
    order = np.argsort(-s, kind="mergesort")
    s_sorted = s[order]
    tp = np.cumsum(y[order])
    last = np.flatnonzero(np.r_[s_sorted[1:] != s_sorted[:-1], True])
    return [
        PRPoint(float(s_sorted[i]), float(tp[i] / (i + 1)), float(tp[i] / n_pos))
        for i in last
    ]


def evaluate_scores(scores, labels, threshold: float = 0.5) -> dict[str, float]:
    a, f = acc_f1(scores, labels, threshold)
    return {"auc": auc(scores, labels), "acc": a, "f1": f}
