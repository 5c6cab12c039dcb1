import csv

import numpy as np
import pytest

from flowrec.errors import EvaluationError
from flowrec.metrics import (
    average_precision,
    evaluate,
    mean_ap,
    pr_curve,
    write_metrics_csv,
)
from reference import ref_average_precision


class TestAveragePrecision:
    def test_worked_example(self):
        scores = [0.9, 0.8, 0.1]
        labels = [1, 0, 1]
        expected = 5.0 / 6.0  # hand-evaluated rank sweep
        assert average_precision(scores, labels) == pytest.approx(expected, abs=1e-12)
        assert ref_average_precision(scores, labels) == pytest.approx(expected, abs=1e-12)

    def test_perfect_ranking(self):
        assert average_precision([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]) == 1.0

    def test_all_positive_any_order(self):
        for scores in ([0.1, 0.5, 0.9], [0.9, 0.1, 0.5]):
            assert average_precision(scores, [1, 1, 1]) == 1.0

    def test_no_positives_flagged(self):
        with pytest.raises(EvaluationError):
            average_precision([0.5, 0.4], [0, 0])

    def test_matches_oracle_on_random_instances(self):
        rng = np.random.default_rng(42)
        for _ in range(200):
            n = int(rng.integers(1, 9))
            labels = rng.integers(0, 2, size=n)
            if labels.sum() == 0:
                labels[int(rng.integers(0, n))] = 1
            scores = np.round(rng.uniform(0, 1, size=n), 2)  # induce ties
            got = average_precision(scores, labels)
            ref = ref_average_precision(scores.tolist(), labels.tolist())
            assert got == pytest.approx(ref, abs=1e-12)

    def test_invariant_under_monotone_transform(self):
        rng = np.random.default_rng(5)
        scores = rng.uniform(0, 1, size=20)
        labels = rng.integers(0, 2, size=20)
        labels[0] = 1
        base = average_precision(scores, labels)
        assert average_precision(3.0 * scores + 2.0, labels) == pytest.approx(base, abs=1e-12)
        assert average_precision(np.exp(scores), labels) == pytest.approx(base, abs=1e-12)

    def test_tie_break_uses_clip_order(self):
        # same score: earlier clip ranks first, so AP depends on order
        assert average_precision([0.5, 0.5], [1, 0]) == 1.0
        assert average_precision([0.5, 0.5], [0, 1]) == 0.5


class TestPrCurve:
    def test_perfect_two_pos_two_neg(self):
        points = pr_curve([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0])
        assert points == [(0.5, 1.0), (1.0, 1.0), (1.0, 2.0 / 3.0), (1.0, 0.5)]

    def test_inverted_one_pos_one_neg(self):
        assert pr_curve([0.9, 0.1], [0, 1]) == [(0.0, 0.0), (1.0, 0.5)]

    def test_empty_input(self):
        with pytest.raises(EvaluationError):
            pr_curve([], [])


class TestMeanAp:
    def test_simple_mean(self):
        assert mean_ap([1.0, 0.5]) == 0.75

    def test_single_class(self):
        assert mean_ap([0.4]) == 0.4

    def test_no_valid_classes(self):
        with pytest.raises(EvaluationError):
            mean_ap([])

    def test_excluded_class_dropped_and_flagged(self):
        scores = np.array([[0.9, 0.2], [0.1, 0.7], [0.5, 0.4]])
        labels = np.array([[0.0, 1.0], [0.0, 1.0], [0.0, 0.0]])
        report = evaluate(scores, labels, ["never", "present"])
        assert report.excluded_classes == ("never",)
        assert report.per_class[0].ap is None
        assert report.mean_ap == pytest.approx(report.per_class[1].ap)

    def test_permutation_invariant_over_classes(self):
        rng = np.random.default_rng(8)
        scores = rng.uniform(0, 1, size=(12, 4))
        labels = (rng.uniform(0, 1, size=(12, 4)) < 0.4).astype(float)
        labels[0] = 1.0
        names = ["a", "b", "c", "d"]
        base = evaluate(scores, labels, names).mean_ap
        perm = [2, 0, 3, 1]
        shuffled = evaluate(scores[:, perm], labels[:, perm], [names[i] for i in perm])
        assert shuffled.mean_ap == pytest.approx(base, abs=1e-12)


class TestCsvReport:
    def test_summary_row_and_exclusion(self, tmp_path):
        scores = np.array([[0.9, 0.3, 0.2], [0.2, 0.8, 0.2], [0.1, 0.2, 0.2]])
        labels = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 0.0]])
        report = evaluate(scores, labels, ["x", "y", "z"])
        path = write_metrics_csv(report, tmp_path / "metrics.csv")
        rows = list(csv.reader(path.open()))
        assert rows[0] == ["class", "ap", "positives", "ties"]
        assert rows[1][0] == "x" and float(rows[1][1]) == 1.0
        assert rows[3][0] == "z" and rows[3][1] == ""  # excluded, not zero
        assert rows[4][0] == "mAP" and float(rows[4][1]) == 1.0
        assert rows[3][3] == "2"  # z column scores tie 3 ways -> 2 duplicates

    def test_perfect_predictions_summarize_to_one(self, tmp_path):
        scores = np.array([[0.9, 0.1], [0.1, 0.9]])
        labels = np.array([[1.0, 0.0], [0.0, 1.0]])
        report = evaluate(scores, labels, ["a", "b"])
        path = write_metrics_csv(report, tmp_path / "m.csv")
        rows = list(csv.reader(path.open()))
        assert rows[-1][0] == "mAP"
        assert float(rows[-1][1]) == 1.0
