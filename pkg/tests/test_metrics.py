import numpy as np
import pytest

from oracles import auc_pairs, auc_trapezoid, pr_points
from qamine.errors import DegenerateLabels, NoPositives
from qamine.metrics import acc_f1, auc, evaluate_scores, pr_curve


def random_instance(rng, n_max=60, tie_levels=None):
    n = int(rng.integers(2, n_max))
    y = rng.random(n) < rng.uniform(0.1, 0.9)
    y[0], y[1] = True, False
    s = rng.integers(0, tie_levels, n).astype(float) if tie_levels else rng.normal(size=n)
    return s, y


class TestAuc:
    def test_perfect_and_reversed(self):
        assert auc([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]) == 1.0
        assert auc([0.1, 0.2, 0.8, 0.9], [1, 1, 0, 0]) == 0.0

    def test_all_tied_is_half(self):
        assert auc([0.3] * 6, [1, 0, 1, 0, 0, 1]) == 0.5

    def test_small_example_with_tie(self):
        # pairs: (0.8,0.5)=1 (0.8,0.4)=1 (0.5,0.5)=.5 (0.5,0.4)=1
        assert auc([0.8, 0.5, 0.5, 0.4], [1, 1, 0, 0]) == pytest.approx(3.5 / 4)

    def test_degenerate(self):
        with pytest.raises(DegenerateLabels):
            auc([0.1, 0.2], [1, 1])
        with pytest.raises(DegenerateLabels):
            auc([], [])

    def test_length_and_nan(self):
        with pytest.raises(ValueError):
            auc([0.1, 0.2], [1])
        with pytest.raises(ValueError):
            auc([0.1, np.nan], [1, 0])

    @pytest.mark.parametrize("ties", [None, 3, 10])
    def test_matches_pair_count_and_trapezoid(self, ties):
        rng = np.random.default_rng(0 if ties is None else ties)
        for _ in range(1000):
            s, y = random_instance(rng, tie_levels=ties)
            got = auc(s, y)
            assert got == pytest.approx(auc_pairs(s, y), abs=1e-12)
            assert got == pytest.approx(auc_trapezoid(s, y), abs=1e-12)

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            s, y = random_instance(rng, tie_levels=8)
            assert auc(s, y) == auc(np.exp(s / 3) * 2 + 1, y)

    def test_label_flip_symmetry(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            s, y = random_instance(rng, tie_levels=5)
            assert auc(s, y) + auc(s, ~y) == pytest.approx(1.0, abs=1e-12)


class TestAccF1:
    def test_example(self):
        acc, f1 = acc_f1([0.9, 0.6, 0.4, 0.2], [1, 0, 1, 0])
        assert acc == 0.5 and f1 == 0.5

    def test_threshold_is_inclusive(self):
        assert acc_f1([0.5], [1]) == (1.0, 1.0)

    def test_no_predicted_positives(self):
        assert acc_f1([0.1, 0.2], [1, 0]) == (0.5, 0.0)

    def test_empty(self):
        with pytest.raises(ValueError):
            acc_f1([], [])

    def test_evaluate_scores_keys(self):
        out = evaluate_scores([0.9, 0.1], [1, 0])
        assert out == {"auc": 1.0, "acc": 1.0, "f1": 1.0}


class TestPrCurve:
    def test_example(self):
        pts = pr_curve([0.9, 0.8, 0.8, 0.1], [1, 0, 1, 0])
        assert [(p.threshold, p.precision, p.recall) for p in pts] == [
            (0.9, 1.0, 0.5),
            (0.8, 2 / 3, 1.0),
            (0.1, 0.5, 1.0),
        ]

    def test_no_positives(self):
        with pytest.raises(NoPositives):
            pr_curve([0.4, 0.3], [0, 0])

    def test_matches_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(1000):
            s, y = random_instance(rng, n_max=40, tie_levels=int(rng.integers(2, 12)))
            got = [(p.threshold, p.precision, p.recall) for p in pr_curve(s, y)]
            want = pr_points(s.tolist(), y.tolist())
            assert len(got) == len(want)
            for g, w in zip(got, want):
                assert g == pytest.approx(w, abs=1e-12)

    def test_recall_nondecreasing(self):
        rng = np.random.default_rng(4)
        s, y = random_instance(rng, n_max=500)
        rec = [p.recall for p in pr_curve(s, y)]
        assert all(a <= b for a, b in zip(rec, rec[1:])) and rec[-1] == 1.0
