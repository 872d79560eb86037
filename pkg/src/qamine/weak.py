"""Turn feedback-model scores into a balanced weakly labeled training set."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidThresholds


@dataclass(frozen=True, slots=True)
class WeakLabelConfig:
    tau_high: float = 0.6
    tau_low: float = 0.4
    balance: bool = True
    seed: int = 0

    def __post_init__(self) -> None:
        if not (0.0 <= self.tau_low <= 1.0 and 0.0 <= self.tau_high <= 1.0):
            raise InvalidThresholds("thresholds must lie in [0, 1]")
        if self.tau_low > self.tau_high:
            raise InvalidThresholds(f"tau_low {self.tau_low} > tau_high {self.tau_high}")


@dataclass(frozen=True, slots=True)
class WeakLabel:
    qp_id: str
    score: float
    label: bool


@dataclass(slots=True)
class ThresholdResult:
    labels: list[WeakLabel]
    discarded: list[tuple[str, float]]

    @property
    def n_discarded(self) -> int:
        return len(self.discarded)


def threshold_labels(scores: Iterable[tuple[str, float]], cfg: WeakLabelConfig) -> ThresholdResult:
    """score >= tau_high -> 1, score <= tau_low -> 0, otherwise discarded.

    A score equal to either threshold is kept. Input order is preserved in
    both the labels and the discarded list.
    """
    if cfg.tau_low > cfg.tau_high:
        raise InvalidThresholds(f"tau_low {cfg.tau_low} > tau_high {cfg.tau_high}")
    labels: list[WeakLabel] = []
    discarded: list[tuple[str, float]] = []
    for qp_id, score in scores:
        score = float(score)
        if not 0.0 <= score <= 1.0:
            raise ValueError(f"score {score} for {qp_id!r} outside [0, 1]")
        if score >= cfg.tau_high:
            labels.append(WeakLabel(qp_id, score, True))
        elif score <= cfg.tau_low:
            labels.append(WeakLabel(qp_id, score, False))
        else:
            discarded.append((qp_id, score))
    return ThresholdResult(labels, discarded)


def balance_sample(labels: Sequence[WeakLabel], seed: int) -> list[WeakLabel]:
    """Downsample the majority class to the minority count, then shuffle.

    Both steps draw from one generator seeded with ``seed``.
    """
    rng = np.random.default_rng(seed)
    pos = [i for i, w in enumerate(labels) if w.label]
    neg = [i for i, w in enumerate(labels) if not w.label]
    k = min(len(pos), len(neg))
    if len(pos) > k:
        pos = sorted(rng.choice(pos, size=k, replace=False).tolist())
    elif len(neg) > k:
        neg = sorted(rng.choice(neg, size=k, replace=False).tolist())
    keep = np.array(pos + neg, dtype=np.int64)
    keep = keep[rng.permutation(keep.size)]
    return [labels[i] for i in keep]


def weak_label(scores: Iterable[tuple[str, float]], cfg: WeakLabelConfig) -> ThresholdResult:
    """Threshold, then balance when ``cfg.balance`` is set."""
    res = threshold_labels(scores, cfg)
    if cfg.balance:
        res.labels = balance_sample(res.labels, cfg.seed)
    return res
