"""Aggregated per-pair behavior features.

Each question-passage pair gets a fixed 14-value vector (index order below).
Counts are kept as exact integers and divided once when a vector is emitted,
so sharded aggregation merged by summing counters reproduces single-pass
results bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .errors import ZeroImpressions
from .session import ImpressionSignals

FEATURE_NAMES = (
    "rf_rate",
    "answer_ctr",
    "answer_only_ctr",
    "answer_sat_ctr",
    "answer_exp_rate",
    "ot_answer_ctr",
    "ot_answer_only_ctr",
    "ot_answer_sat_ctr",
    "both_click_ctr",
    "related_click_rate",
    "no_click_rate",
    "abandon_rate",
    "avg_source_page_dwell_ms",
    "avg_serp_dwell_ms",
)
N_FEATURES = len(FEATURE_NAMES)
FEATURE_ORDER_VERSION = "behavior-v1"
FEATURE_INDEX = {name: i for i, name in enumerate(FEATURE_NAMES)}

# ImpressionSignals flag behind each rate feature (indices 0-11)
_RATE_FLAGS = (
    "reformulated",
    "answer_click",
    "answer_only",
    "answer_sat_click",
    "answer_exp_click",
    "ot_answer_click",
    "ot_only",
    "ot_sat_click",
    "both_click",
    "related_click",
    "no_click",
    "abandoned",
)
_FLAG_POS = tuple(ImpressionSignals._fields.index(name) for name in _RATE_FLAGS)


def ctr(n_click: int, n_impression: int) -> float:
    """Click-through rate: clicks over impressions."""
    if n_impression == 0:
        raise ZeroImpressions("CTR undefined with zero impressions")
    if n_click < 0 or n_click > n_impression:
        raise ValueError(f"click count {n_click} outside [0, {n_impression}]")
    return n_click / n_impression


def sat_ctr(n_sat_click: int, n_impression: int) -> float:
    """Satisfied click-through rate: long-dwell clicks over impressions."""
    if n_impression == 0:
        raise ZeroImpressions("SatCTR undefined with zero impressions")
    if n_sat_click < 0 or n_sat_click > n_impression:
        raise ValueError(f"sat click count {n_sat_click} outside [0, {n_impression}]")
    return n_sat_click / n_impression


@dataclass(frozen=True, slots=True)
class AggregationConfig:
    sat_threshold_ms: int = 30_000
    min_impressions: int = 10

    def __post_init__(self) -> None:
        if self.sat_threshold_ms <= 0 or self.min_impressions <= 0:
            raise ValueError("sat_threshold_ms and min_impressions must be positive")


@dataclass(frozen=True, slots=True)
class BehaviorFeatures:
    qp_id: str
    n_impressions: int
    values: tuple[float, ...]

    def __getitem__(self, name: str) -> float:
        return self.values[FEATURE_INDEX[name]]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=np.float64)


@dataclass(slots=True)
class PairCounter:
    n: int = 0
    flags: list[int] = field(default_factory=lambda: [0] * len(_RATE_FLAGS))
    source_dwell_sum: int = 0
    n_source: int = 0
    serp_dwell_sum: int = 0

    def add(self, imp: ImpressionSignals) -> None:
        self.n += 1
        flags = self.flags
        for k, pos in enumerate(_FLAG_POS):
            if imp[pos]:
                flags[k] += 1
        if imp.answer_click:
            self.n_source += 1
            self.source_dwell_sum += imp.source_dwell_ms or 0
        self.serp_dwell_sum += imp.serp_dwell_ms

    def merge(self, other: PairCounter) -> None:
        self.n += other.n
        self.flags = [a + b for a, b in zip(self.flags, other.flags)]
        self.source_dwell_sum += other.source_dwell_sum
        self.n_source += other.n_source
        self.serp_dwell_sum += other.serp_dwell_sum

    def emit(self, qp_id: str) -> BehaviorFeatures:
        n = self.n
        rates = [c / n for c in self.flags]
        src = self.source_dwell_sum / self.n_source if self.n_source else 0.0
        return BehaviorFeatures(qp_id, n, tuple(rates) + (src, self.serp_dwell_sum / n))


def count_impressions(impressions: Iterable[ImpressionSignals]) -> dict[str, PairCounter]:
    counters: dict[str, PairCounter] = {}
    for imp in impressions:
        c = counters.get(imp.qp_id)
        if c is None:
            c = counters[imp.qp_id] = PairCounter()
        c.add(imp)
    return counters


def merge_counters(shards: Iterable[Mapping[str, PairCounter]]) -> dict[str, PairCounter]:
    merged: dict[str, PairCounter] = {}
    for shard in shards:
        for qp, c in shard.items():
            if qp not in merged:
                merged[qp] = PairCounter()
            merged[qp].merge(c)
    return merged


@dataclass(slots=True)
class AggregationResult:
    features: list[BehaviorFeatures]
    n_dropped: int


def emit_features(counters: Mapping[str, PairCounter], cfg: AggregationConfig) -> AggregationResult:
    out = []
    dropped = 0
    for qp in sorted(counters):
        c = counters[qp]
        if c.n < cfg.min_impressions:
            dropped += 1
            continue
        out.append(c.emit(qp))
    return AggregationResult(out, dropped)


def aggregate(impressions: Iterable[ImpressionSignals], cfg: AggregationConfig | None = None) -> AggregationResult:
    """One feature vector per pair with at least ``cfg.min_impressions``.

    Output is sorted by qp_id; pairs below the impression floor are dropped
    and counted in ``n_dropped``.
    """
    return emit_features(count_impressions(impressions), cfg or AggregationConfig())


def feature_matrix(rows: Iterable[BehaviorFeatures]) -> np.ndarray:
    rows = list(rows)
    if not rows:
        return np.zeros((0, N_FEATURES))
    return np.array([r.values for r in rows], dtype=np.float64)
