"""End-to-end weak-supervision experiment on simulated data.

One seeded run simulates four disjoint groups of pairs:

* ``feedback``: behavior logs plus gold labels, used to fit and test the
  implicit-feedback classifier;
* ``pool``: behavior logs only, scored by that classifier and turned into
  weak labels;
* ``finetune``: a small gold-labelled set for the second training stage;
* ``test``: gold-labelled pairs held out for the relevance model.

Behavior is streamed through the same parse-free event path the CLI uses
after decoding, in chunks of whole pairs (sessions never span pairs).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from . import qa
from .features import (
    FEATURE_INDEX,
    AggregationConfig,
    BehaviorFeatures,
    PairCounter,
    count_impressions,
    emit_features,
    feature_matrix,
)
from .feedback import FeedbackModel, split_indices, train_named
from .io import round_features
from .metrics import auc
from .session import TerminalClickPolicy, build_sessions, extract_impressions
from .simulator import SimConfig, SimPair, gen_gold_labels, gen_pairs, iter_session_events
from .weak import WeakLabel, WeakLabelConfig, weak_label

ROLES = ("feedback", "pool", "finetune", "test")


@dataclass(frozen=True)
class PipelineConfig:
    """Experiment settings. ``seed`` is copied into every sub-config."""

    seed: int = 7
    sim: SimConfig = field(default_factory=SimConfig)
    n_feedback: int = 5000
    n_pool: int = 32000
    n_finetune: int = 500
    n_test: int = 2000
    weak_cap: int = 20000
    feedback_model: str = "gbdt"
    baseline_feature: str = "answer_ctr"
    aggregation: AggregationConfig = field(default_factory=AggregationConfig)
    terminal_policy: TerminalClickPolicy = TerminalClickPolicy.SATISFIED
    weak: WeakLabelConfig = field(default_factory=WeakLabelConfig)
    pretrain: qa.TrainConfig = qa.PRETRAIN_DEFAULTS
    finetune: qa.TrainConfig = qa.FINETUNE_DEFAULTS
    chunk_pairs: int = 2000

    def __post_init__(self) -> None:
        for name in ("n_feedback", "n_pool", "n_finetune", "n_test", "weak_cap", "chunk_pairs"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.n_finetune == 0 or self.n_test == 0 or self.chunk_pairs == 0:
            raise ValueError("n_finetune, n_test and chunk_pairs must be positive")
        seed = self.seed
        object.__setattr__(self, "sim", replace(self.sim, seed=seed))
        object.__setattr__(self, "weak", replace(self.weak, seed=seed))
        object.__setattr__(self, "pretrain", replace(self.pretrain, seed=seed))
        object.__setattr__(self, "finetune", replace(self.finetune, seed=seed))

    @property
    def n_total(self) -> int:
        return self.n_feedback + self.n_pool + self.n_finetune + self.n_test

    def with_seed(self, seed: int) -> PipelineConfig:
        return replace(self, seed=seed)

    def role_start(self, role: str) -> int:
        sizes = dict(zip(ROLES, (self.n_feedback, self.n_pool, self.n_finetune, self.n_test)))
        return sum(sizes[r] for r in ROLES[: ROLES.index(role)])


def assign_roles(pairs: Sequence[SimPair], cfg: PipelineConfig) -> dict[str, list[SimPair]]:
    """Consecutive index ranges; pair text is i.i.d. so order carries no signal."""
    sizes = (cfg.n_feedback, cfg.n_pool, cfg.n_finetune, cfg.n_test)
    out: dict[str, list[SimPair]] = {}
    start = 0
    for role, n in zip(ROLES, sizes):
        out[role] = list(pairs[start:start + n])
        start += n
    return out


def behavior_features(pairs: Sequence[SimPair], cfg: PipelineConfig) -> tuple[list[BehaviorFeatures], int]:
    """Simulate, sessionize and aggregate behavior for ``pairs``.

    Values are rounded to the features-file precision so that models trained
    here match models trained from the written TSV.
    """
    counters: dict[str, PairCounter] = {}
    sat = cfg.aggregation.sat_threshold_ms
    for lo in range(0, len(pairs), cfg.chunk_pairs):
        chunk = pairs[lo:lo + cfg.chunk_pairs]
        imps = []
        for s in build_sessions(iter_session_events(chunk, cfg.sim)):
            imps.extend(extract_impressions(s, sat, cfg.terminal_policy))
        counters.update(count_impressions(imps))
    res = emit_features(counters, cfg.aggregation)
    return round_features(res.features), res.n_dropped


@dataclass
class FeedbackStage:
    model: FeedbackModel
    features: list[BehaviorFeatures]
    gold: np.ndarray
    test_rows: np.ndarray
    gbdt_auc: float
    baseline_auc: float
    n_dropped: int


def run_feedback_stage(pairs: Sequence[SimPair], cfg: PipelineConfig) -> FeedbackStage:
    feats, dropped = behavior_features(pairs, cfg)
    gold_map = dict(gen_gold_labels(pairs, cfg.sim))
    X = feature_matrix(feats)
    y = np.array([gold_map[f.qp_id] for f in feats], dtype=bool)
    train, _dev, test = split_indices(len(feats), cfg.seed)
    model = train_named(cfg.feedback_model, X[train], y[train], seed=cfg.seed)
    baseline = train_named(f"baseline:{FEATURE_INDEX[cfg.baseline_feature]}", X[train], y[train])
    return FeedbackStage(
        model=model,
        features=feats,
        gold=y,
        test_rows=test,
        gbdt_auc=auc(model.predict_proba(X[test]), y[test]),
        baseline_auc=auc(baseline.predict_proba(X[test]), y[test]),
        n_dropped=dropped,
    )


@dataclass
class WeakStage:
    labels: list[WeakLabel]
    n_scored: int
    n_discarded: int
    discarded: list[tuple[str, float]]


def run_weak_stage(pairs: Sequence[SimPair], model: FeedbackModel, cfg: PipelineConfig) -> WeakStage:
    feats, _ = behavior_features(pairs, cfg)
    scores = model.predict_proba(feature_matrix(feats)) if feats else np.zeros(0)
    res = weak_label(zip((f.qp_id for f in feats), scores.tolist()), cfg.weak)
    return WeakStage(res.labels[: cfg.weak_cap], len(feats), res.n_discarded, res.discarded)


def weak_pairs(labels: Iterable[WeakLabel], by_id: dict[str, SimPair]) -> list[qa.QAPair]:
    return [replace(by_id[w.qp_id].pair, label=w.label) for w in labels]


def gold_pairs(pairs: Sequence[SimPair], cfg: SimConfig) -> list[qa.QAPair]:
    labels = [lab for _, lab in gen_gold_labels(pairs, cfg)]
    return qa.with_labels([sp.pair for sp in pairs], labels)


@dataclass
class PipelineResult:
    config: PipelineConfig
    feedback: FeedbackStage
    weak: WeakStage
    pretrain_pairs: list[qa.QAPair]
    finetune_pairs: list[qa.QAPair]
    test_pairs: list[qa.QAPair]
    pretrained_model: qa.RelevanceModel | None
    two_stage_model: qa.RelevanceModel
    finetune_only_model: qa.RelevanceModel
    two_stage_auc: float
    finetune_only_auc: float
    seconds: float

    def summary(self) -> dict[str, float | int]:
        return {
            "seed": self.config.seed,
            "gbdt_auc": self.feedback.gbdt_auc,
            "answer_ctr_auc": self.feedback.baseline_auc,
            "two_stage_auc": self.two_stage_auc,
            "finetune_only_auc": self.finetune_only_auc,
            "weak_gain": self.two_stage_auc - self.finetune_only_auc,
            "n_feedback_pairs": len(self.feedback.features),
            "n_weak_scored": self.weak.n_scored,
            "n_weak_discarded": self.weak.n_discarded,
            "n_weak_used": len(self.pretrain_pairs),
            "n_finetune": len(self.finetune_pairs),
            "n_test": len(self.test_pairs),
        }


def run_pipeline(cfg: PipelineConfig) -> PipelineResult:
    t0 = time.perf_counter()
    roles = assign_roles(gen_pairs(replace(cfg.sim, n_pairs=cfg.n_total)), cfg)
    fb = run_feedback_stage(roles["feedback"], cfg)
    ws = run_weak_stage(roles["pool"], fb.model, cfg)
    by_id = {sp.pair.qp_id: sp for sp in roles["pool"]}
    pre = weak_pairs(ws.labels, by_id)
    fine = gold_pairs(roles["finetune"], cfg.sim)
    test = gold_pairs(roles["test"], cfg.sim)

    fine_only = qa.train(qa.RelevanceModel(), fine, cfg.finetune, "finetune")
    # same as qa.two_stage, unrolled to keep the intermediate model
    pretrained = qa.train(qa.RelevanceModel(), pre, cfg.pretrain, "pretrain") if pre else None
    two = qa.train(pretrained, fine, cfg.finetune, "finetune") if pretrained is not None else fine_only
    two_auc, _ = qa.evaluate(two, test)
    fine_auc, _ = qa.evaluate(fine_only, test)
    return PipelineResult(
        config=cfg,
        feedback=fb,
        weak=ws,
        pretrain_pairs=pre,
        finetune_pairs=fine,
        test_pairs=test,
        pretrained_model=pretrained,
        two_stage_model=two,
        finetune_only_model=fine_only,
        two_stage_auc=two_auc,
        finetune_only_auc=fine_auc,
        seconds=time.perf_counter() - t0,
    )


def pretrain_size_curve(result: PipelineResult, sizes: Sequence[int]) -> list[tuple[int, float]]:
    """Held-out AUC after pre-training on the first ``k`` weak pairs.

    The weak list is already shuffled by balancing, so prefixes stay close
    to balanced. Size 0 means fine-tuning only.
    """
    cfg = result.config
    out = []
    for k in sizes:
        if k > len(result.pretrain_pairs):
            raise ValueError(f"only {len(result.pretrain_pairs)} weak pairs available, asked for {k}")
        if k == 0:
            model = result.finetune_only_model
        else:
            model = qa.two_stage(result.pretrain_pairs[:k], result.finetune_pairs, cfg.pretrain, cfg.finetune)
        out.append((k, qa.evaluate(model, result.test_pairs)[0]))
    return out
