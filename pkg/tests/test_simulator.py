from dataclasses import replace

import numpy as np
import pytest

from qamine.errors import EvenPanel
from qamine.features import AggregationConfig, aggregate, feature_matrix
from qamine.feedback import split_indices, train_gbdt
from qamine.metrics import auc
from qamine.qa import tokenize
from qamine.session import EventKind, build_sessions, extract_impressions, parse_log
from qamine.simulator import (
    DEFAULT_RELEVANT,
    SimConfig,
    gen_gold_labels,
    gen_pairs,
    gen_sessions,
    is_generic_token,
    iter_session_events,
    majority_vote,
)


def impressions_of(pairs, cfg):
    out = []
    for s in build_sessions(iter_session_events(pairs, cfg)):
        out.extend(extract_impressions(s, 30_000))
    return out


class TestText:
    def test_deterministic(self):
        cfg = SimConfig(n_pairs=50, seed=3)
        assert gen_pairs(cfg) == gen_pairs(cfg)
        assert gen_pairs(cfg) != gen_pairs(replace(cfg, seed=4))

    def test_start_offset_reproduces_slice(self):
        cfg = SimConfig(n_pairs=30)
        full = gen_pairs(cfg)
        assert gen_pairs(replace(cfg, n_pairs=10), start=20) == full[20:]
        with pytest.raises(ValueError):
            gen_pairs(cfg, start=-1)

    def test_zero_pairs(self):
        cfg = SimConfig(n_pairs=0)
        assert gen_pairs(cfg) == [] and gen_sessions([], cfg) == [] and gen_gold_labels([], cfg) == []

    def test_overlap_contracts(self):
        cfg = SimConfig(n_pairs=2000, seed=1)
        for sp in gen_pairs(cfg):
            q = set(tokenize(sp.pair.question))
            p = set(tokenize(sp.pair.passage))
            assert 3 <= len(q) <= 8
            if sp.truth:
                assert len(q & p) >= 0.7 * len(q)
            else:
                content = {t for t in q if not is_generic_token(cfg, t)}
                assert len(content & p) <= 0.2 * len(content)

    def test_no_generic_vocab_bounds_total_overlap(self):
        cfg = SimConfig(n_pairs=1000, generic_vocab_fraction=0.0)
        for sp in gen_pairs(cfg):
            if not sp.truth:
                q = set(tokenize(sp.pair.question))
                assert len(q & set(tokenize(sp.pair.passage))) <= 0.2 * len(q)

    def test_positive_rate(self):
        pairs = gen_pairs(SimConfig(n_pairs=4000, positive_rate=0.3))
        assert np.mean([sp.truth for sp in pairs]) == pytest.approx(0.3, abs=0.03)

    @pytest.mark.parametrize(
        "kw",
        [dict(n_judges=2), dict(judge_error_rate=0.5), dict(passage_length=(5, 2)), dict(pair_flip_rate=1.5), dict(n_pairs=-1)],
    )
    def test_invalid_config(self, kw):
        with pytest.raises(ValueError):
            SimConfig(**kw)


class TestJudges:
    def test_majority_vote(self):
        assert majority_vote([True, False, True]) and not majority_vote([False])
        with pytest.raises(EvenPanel):
            majority_vote([True, False])
        with pytest.raises(EvenPanel):
            majority_vote([])

    def test_agreement_rate(self):
        # three judges at error 0.1: P(majority right) = 0.9^3 + 3 * 0.9^2 * 0.1 = 0.972
        cfg = SimConfig(n_pairs=10_000, seed=2)
        pairs = gen_pairs(cfg)
        gold = gen_gold_labels(pairs, cfg)
        agree = np.mean([sp.truth == lab for sp, (_, lab) in zip(pairs, gold)])
        assert agree == pytest.approx(0.972, abs=0.01)

    def test_error_free_judges(self):
        cfg = SimConfig(n_pairs=200, judge_error_rate=0.0)
        pairs = gen_pairs(cfg)
        assert all(sp.truth == lab for sp, (_, lab) in zip(pairs, gen_gold_labels(pairs, cfg)))


class TestBehavior:
    def test_log_lines_parse_back_to_events(self):
        cfg = SimConfig(n_pairs=800, seed=4)
        pairs = gen_pairs(cfg)
        lines = gen_sessions(pairs, cfg)
        assert len(lines) >= 100_000
        assert parse_log(lines) == list(iter_session_events(pairs, cfg))

    def test_impression_count_is_poisson_mean(self):
        cfg = SimConfig(n_pairs=2000, impressions_per_pair=40.0)
        pairs = gen_pairs(cfg)
        n_serp = sum(1 for e in iter_session_events(pairs, cfg) if e.kind is EventKind.SERP)
        assert n_serp / len(pairs) == pytest.approx(40.0, rel=0.05)

    def test_all_no_click_profile(self):
        prof = replace(DEFAULT_RELEVANT, p_no_click=1.0, p_answer_only=0.0, p_ot_only=0.0, p_both=0.0, p_other_only=0.0, answer_click_dispersion=0.0)
        cfg = SimConfig(n_pairs=20, relevant=prof, irrelevant=prof)
        assert not any(e.kind is EventKind.CLICK for e in iter_session_events(gen_pairs(cfg), cfg))

    def test_answer_only_profile(self):
        prof = replace(
            DEFAULT_RELEVANT, p_no_click=0.0, p_answer_only=1.0, p_ot_only=0.0, p_both=0.0, p_other_only=0.0,
            p_related_click=0.0, p_answer_expansion=0.0, answer_click_dispersion=0.0,
        )
        cfg = SimConfig(n_pairs=20, relevant=prof, irrelevant=prof)
        imps = impressions_of(gen_pairs(cfg), cfg)
        assert imps and all(i.answer_only for i in imps)

    def test_noise_free_behavior_separates_classes(self):
        cfg = SimConfig(n_pairs=3000, seed=5, pair_flip_rate=0.0,
                        relevant=replace(DEFAULT_RELEVANT, behavior_noise=0.0),
                        irrelevant=replace(SimConfig().irrelevant, behavior_noise=0.0))
        pairs = gen_pairs(cfg)
        feats = aggregate(impressions_of(pairs, cfg)).features
        truth = {sp.pair.qp_id: sp.truth for sp in pairs}
        X = feature_matrix(feats)
        y = np.array([truth[f.qp_id] for f in feats])
        tr, _, te = split_indices(len(y), 0)
        m = train_gbdt(X[tr], y[tr], n_trees=100)
        assert auc(m.predict_proba(X[te]), y[te]) >= 0.99

    def test_more_behavior_noise_does_not_help(self):
        def heldout_auc(noise, seed):
            cfg = SimConfig(n_pairs=800, seed=seed, pair_flip_rate=0.0,
                            relevant=replace(DEFAULT_RELEVANT, behavior_noise=noise),
                            irrelevant=replace(SimConfig().irrelevant, behavior_noise=noise))
            pairs = gen_pairs(cfg)
            feats = aggregate(impressions_of(pairs, cfg)).features
            truth = {sp.pair.qp_id: sp.truth for sp in pairs}
            X = feature_matrix(feats)
            y = np.array([truth[f.qp_id] for f in feats])
            tr, dev, te = split_indices(len(y), seed)
            te = np.r_[dev, te]  # a larger held-out slice steadies the estimate
            return auc(train_gbdt(X[tr], y[tr], n_trees=40).predict_proba(X[te]), y[te])

        means = [np.mean([heldout_auc(noise, seed) for seed in range(5)]) for noise in (0.0, 0.3, 0.45)]
        assert means[0] >= means[1] >= means[2]

    def test_multi_impression_sessions(self):
        cfg = SimConfig(n_pairs=50, multi_impression_sessions=True)
        pairs = gen_pairs(cfg)
        events = list(iter_session_events(pairs, cfg))
        sessions = build_sessions(events)
        n_serp = sum(1 for e in events if e.kind is EventKind.SERP)
        assert len(sessions) < n_serp
        assert max(sum(e.kind is EventKind.SERP for e in s.events) for s in sessions) == 2
        assert len(impressions_of(pairs, cfg)) == n_serp

    def test_events_depend_only_on_pair_index(self):
        cfg = SimConfig(n_pairs=40)
        pairs = gen_pairs(cfg)
        whole = list(iter_session_events(pairs, cfg))
        pieces = list(iter_session_events(pairs[:25], cfg)) + list(iter_session_events(pairs[25:], cfg))
        assert whole == pieces
