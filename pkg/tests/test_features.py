import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import random_session_events, recount
from qamine.errors import ZeroImpressions
from qamine.features import (
    FEATURE_NAMES,
    AggregationConfig,
    aggregate,
    count_impressions,
    ctr,
    emit_features,
    merge_counters,
    sat_ctr,
)
from qamine.session import ImpressionSignals, build_sessions, extract_impressions


def imp(qp="a", **kw):
    base = dict(
        qp_id=qp,
        answer_click=False,
        answer_exp_click=False,
        ot_answer_click=False,
        related_click=False,
        answer_only=False,
        ot_only=False,
        both_click=False,
        no_click=False,
        answer_sat_click=False,
        ot_sat_click=False,
        reformulated=False,
        abandoned=False,
        serp_dwell_ms=0,
        source_dwell_ms=None,
    )
    base.update(kw)
    return ImpressionSignals(**base)


def random_impressions(seed: int, n_sessions: int, sat: int = 30_000):
    rng = np.random.default_rng(seed)
    out = []
    for k in range(n_sessions):
        (s,) = build_sessions(random_session_events(rng, f"s{k}"))
        out += extract_impressions(s, sat)
    return out


class TestRates:
    @pytest.mark.parametrize("c,n,want", [(5, 50, 0.1), (0, 50, 0.0), (50, 50, 1.0)])
    def test_ctr(self, c, n, want):
        assert ctr(c, n) == want

    @pytest.mark.parametrize("c,n,want", [(3, 50, 0.06), (0, 1, 0.0)])
    def test_sat_ctr(self, c, n, want):
        assert sat_ctr(c, n) == want

    def test_zero_impressions(self):
        with pytest.raises(ZeroImpressions):
            ctr(0, 0)
        with pytest.raises(ZeroImpressions):
            sat_ctr(0, 0)

    def test_count_out_of_range(self):
        with pytest.raises(ValueError):
            ctr(6, 5)

    def test_sat_ctr_bounded_by_ctr(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            n = int(rng.integers(1, 100))
            c = int(rng.integers(0, n + 1))
            s = int(rng.integers(0, c + 1))
            assert sat_ctr(s, n) <= ctr(c, n)


class TestAggregate:
    def test_two_impression_example(self):
        imps = [
            imp(answer_click=True, answer_only=True, answer_sat_click=True, serp_dwell_ms=40_000, source_dwell_ms=35_000),
            imp(no_click=True, abandoned=True, serp_dwell_ms=20_000),
        ]
        (f,) = aggregate(imps, AggregationConfig(min_impressions=1)).features
        assert f["answer_ctr"] == 0.5 and f["answer_only_ctr"] == 0.5 and f["answer_sat_ctr"] == 0.5
        assert f["both_click_ctr"] == 0.0
        assert f["no_click_rate"] == 0.5 and f["abandon_rate"] == 0.5
        assert f["avg_serp_dwell_ms"] == 30_000 and f["avg_source_page_dwell_ms"] == 35_000
        assert f.n_impressions == 2

    def test_below_floor_is_dropped(self):
        res = aggregate([imp()], AggregationConfig(min_impressions=10))
        assert res.features == [] and res.n_dropped == 1

    def test_all_no_click(self):
        (f,) = aggregate([imp(no_click=True, abandoned=True)] * 10).features
        assert f["no_click_rate"] == 1.0 and f["avg_source_page_dwell_ms"] == 0.0
        assert all(f[name] == 0.0 for name in ("answer_ctr", "ot_answer_ctr", "both_click_ctr", "answer_sat_ctr"))

    def test_sorted_output(self):
        imps = [imp(qp) for qp in "cab" for _ in range(10)]
        assert [f.qp_id for f in aggregate(imps).features] == ["a", "b", "c"]

    def test_config_validation(self):
        with pytest.raises(ValueError):
            AggregationConfig(sat_threshold_ms=0)
        with pytest.raises(ValueError):
            AggregationConfig(min_impressions=0)

    def test_matches_recount_oracle(self):
        imps = random_impressions(3, 3000)
        res = aggregate(imps, AggregationConfig(min_impressions=1))
        ref = recount(imps)
        assert len(res.features) == len(ref)
        for f in res.features:
            row = ref[f.qp_id]
            assert f.n_impressions == row["n"]
            for name in FEATURE_NAMES:
                assert f[name] == pytest.approx(row[name], rel=1e-12, abs=0)

    def test_identities_and_ranges(self):
        res = aggregate(random_impressions(4, 3000), AggregationConfig(min_impressions=1))
        for f in res.features:
            v = f.as_array()
            assert np.all((v[:12] >= 0) & (v[:12] <= 1)) and np.all(v[12:] >= 0)
            n = f.n_impressions
            # compare on the count scale where the identities are exact integers
            assert round(f["answer_only_ctr"] * n) + round(f["both_click_ctr"] * n) == round(f["answer_ctr"] * n)
            assert round(f["ot_answer_only_ctr"] * n) + round(f["both_click_ctr"] * n) == round(f["ot_answer_ctr"] * n)
            assert f["answer_sat_ctr"] <= f["answer_ctr"] and f["ot_answer_sat_ctr"] <= f["ot_answer_ctr"]
            assert f["abandon_rate"] <= f["no_click_rate"]

    def test_raising_threshold_never_raises_sat_ctr(self):
        rng = np.random.default_rng(6)
        sessions = [build_sessions(random_session_events(rng, f"s{k}"))[0] for k in range(1500)]
        prev = None
        for sat in (5_000, 15_000, 25_000, 35_000):
            imps = [i for s in sessions for i in extract_impressions(s, sat)]
            cur = {f.qp_id: f["answer_sat_ctr"] for f in aggregate(imps, AggregationConfig(sat, 1)).features}
            if prev is not None:
                assert all(cur[k] <= prev[k] for k in cur)
            prev = cur


class TestSharding:
    def test_sharded_equals_single_pass(self):
        imps = random_impressions(7, 4000)
        cfg = AggregationConfig(min_impressions=1)
        single = aggregate(imps, cfg)
        rng = np.random.default_rng(8)
        shard_of = rng.integers(0, 7, size=len(imps))
        shards = [count_impressions([i for i, s in zip(imps, shard_of) if s == k]) for k in range(7)]
        merged = emit_features(merge_counters(shards), cfg)
        assert merged.features == single.features  # exact float equality
        assert merged.n_dropped == single.n_dropped

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**31), st.integers(1, 6))
    def test_any_partition(self, seed, k):
        imps = random_impressions(seed, 60)
        cfg = AggregationConfig(min_impressions=2)
        rng = np.random.default_rng(seed)
        order = rng.permutation(len(imps))
        cuts = np.array_split(order, k)
        shards = [count_impressions([imps[i] for i in part]) for part in cuts]
        assert emit_features(merge_counters(shards), cfg) == aggregate(imps, cfg)
