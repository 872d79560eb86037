import numpy as np
import pytest

from qamine.errors import InvalidThresholds
from qamine.weak import WeakLabel, WeakLabelConfig, balance_sample, threshold_labels, weak_label


def scored(values):
    return [(f"q{i}", v) for i, v in enumerate(values)]


class TestThreshold:
    def test_example(self):
        res = threshold_labels(scored([0.9, 0.5, 0.1, 0.6, 0.4]), WeakLabelConfig())
        assert [(w.qp_id, w.label) for w in res.labels] == [("q0", True), ("q2", False), ("q3", True), ("q4", False)]
        assert res.discarded == [("q1", 0.5)] and res.n_discarded == 1

    def test_equal_thresholds_keep_everything(self):
        res = threshold_labels(scored([0.2, 0.5, 0.8]), WeakLabelConfig(0.5, 0.5))
        assert [w.label for w in res.labels] == [False, True, True] and not res.discarded

    def test_invalid(self):
        with pytest.raises(InvalidThresholds):
            WeakLabelConfig(tau_high=0.3, tau_low=0.4)
        with pytest.raises(InvalidThresholds):
            WeakLabelConfig(tau_high=1.5)
        with pytest.raises(ValueError):
            threshold_labels([("a", 1.2)], WeakLabelConfig())

    def test_partition_invariant(self):
        rng = np.random.default_rng(0)
        vals = rng.random(5000)
        cfg = WeakLabelConfig(0.7, 0.2)
        res = threshold_labels(scored(vals), cfg)
        assert len(res.labels) + res.n_discarded == 5000
        assert all((w.score >= 0.7) == w.label for w in res.labels)
        assert all(0.2 < s < 0.7 for _, s in res.discarded)


class TestBalance:
    def labels(self, n_pos, n_neg):
        return [WeakLabel(f"p{i}", 0.9, True) for i in range(n_pos)] + [WeakLabel(f"n{i}", 0.1, False) for i in range(n_neg)]

    def test_equal_class_counts(self):
        out = balance_sample(self.labels(70, 30), seed=1)
        assert sum(w.label for w in out) == 30 and len(out) == 60
        assert len({w.qp_id for w in out}) == 60

    def test_single_class_yields_empty(self):
        assert balance_sample(self.labels(5, 0), 0) == []

    def test_seeded_and_shuffled(self):
        items = self.labels(40, 40)
        a, b = balance_sample(items, 3), balance_sample(items, 3)
        assert a == b and a != items and sorted(a, key=lambda w: w.qp_id) == sorted(items, key=lambda w: w.qp_id)
        assert balance_sample(items, 4) != a

    def test_weak_label_respects_flag(self):
        vals = [0.9] * 10 + [0.1] * 3
        assert len(weak_label(scored(vals), WeakLabelConfig(balance=False)).labels) == 13
        assert len(weak_label(scored(vals), WeakLabelConfig()).labels) == 6
