import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmvcf import TrainingError, average_precision, emit_report, iou, roc_auc
from mmvcf.evaluation import MethodMetrics, ScoredLabel


class TestROC:
    def test_hand_case(self):
        items = [ScoredLabel(0.9, 1), ScoredLabel(0.8, -1), ScoredLabel(0.7, 1), ScoredLabel(0.6, -1)]
        _, auc = roc_auc(items)
        assert abs(auc - 0.75) <= 1e-12

    def test_perfect(self):
        _, auc = roc_auc([3.0, 2.0, 1.0, 0.0], [1, 1, -1, -1])
        assert auc == 1.0

    def test_all_tied(self):
        points, auc = roc_auc([0.5] * 4, [1, -1, -1, 1])
        assert auc == 0.5
        assert [(p[1], p[2]) for p in points] == [(0.0, 0.0), (1.0, 1.0)]

    def test_single_class(self):
        with pytest.raises(TrainingError):
            roc_auc([1.0, 2.0], [1, 1])

    def test_scored_label_validation(self):
        with pytest.raises(ValueError):
            ScoredLabel(float("nan"), 1)
        with pytest.raises(ValueError):
            ScoredLabel(0.0, 0)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.tuples(st.integers(-20, 20).map(lambda v: v / 4), st.sampled_from([-1, 1])), min_size=2, max_size=30))
    def test_invariances(self, pairs):
        scores = np.array([p[0] for p in pairs])
        labels = np.array([p[1] for p in pairs])
        if len(set(labels)) < 2:
            return
        _, auc = roc_auc(scores, labels)
        _, auc_exp = roc_auc(np.exp(scores), labels)
        _, auc_rev = roc_auc(scores, -labels)
        assert auc_exp == pytest.approx(auc, abs=1e-12)
        assert auc_rev == pytest.approx(1.0 - auc, abs=1e-12)


class TestIoU:
    def test_identical(self):
        assert iou((1, 2, 3, 4), (1, 2, 3, 4)) == 1.0

    def test_disjoint(self):
        assert iou((0, 0, 1, 1), (5, 5, 1, 1)) == 0.0

    def test_half_offset(self):
        assert abs(iou((0, 0, 1, 1), (0.5, 0, 1, 1)) - 1 / 3) <= 1e-15

    def test_degenerate(self):
        with pytest.raises(ValueError):
            iou((0, 0, 0, 1), (0, 0, 1, 1))

    @settings(max_examples=50)
    @given(st.tuples(*[st.floats(-10, 10)] * 2, *[st.floats(0.1, 10)] * 2),
           st.tuples(*[st.floats(-10, 10)] * 2, *[st.floats(0.1, 10)] * 2))
    def test_symmetric_and_bounded(self, a, b):
        assert iou(a, b) == iou(b, a)
        assert 0.0 <= iou(a, b) <= 1.0 + 1e-12


class TestAveragePrecision:
    gts = {"a": [(0, 0, 10, 10)], "b": [(20, 20, 10, 10)]}

    def test_hand_case(self):
        dets = {"a": [((0, 0, 10, 10), 0.9), ((50, 50, 10, 10), 0.8)], "b": [((20, 20, 10, 10), 0.7)]}
        assert abs(average_precision(dets, self.gts) - (1.0 + 2 / 3) / 2) <= 1e-12

    def test_perfect(self):
        dets = {"a": [((0, 0, 10, 10), 0.5)], "b": [((20, 20, 10, 10), 0.4)]}
        assert average_precision(dets, self.gts) == 1.0

    def test_all_miss(self):
        dets = {"a": [((40, 40, 10, 10), 0.5)], "b": [((0, 0, 10, 10), 0.4)]}
        assert average_precision(dets, self.gts) == 0.0

    def test_no_detections(self):
        assert average_precision({}, self.gts) == 0.0

    def test_duplicate_counts_once(self):
        dets = {"a": [((0, 0, 10, 10), 0.9), ((0, 0, 10, 10), 0.8)]}
        assert average_precision(dets, {"a": self.gts["a"]}) == 1.0

    def test_no_ground_truth(self):
        with pytest.raises(ValueError):
            average_precision({"a": [((0, 0, 1, 1), 1.0)]}, {})

    def test_monotone_transform(self):
        dets = {"a": [((0, 0, 10, 10), 0.2), ((1, 0, 10, 10), 0.6)], "b": [((21, 20, 10, 10), -0.3)]}
        expd = {k: [(b, float(np.exp(s))) for b, s in v] for k, v in dets.items()}
        assert average_precision(expd, self.gts) == average_precision(dets, self.gts)


class TestReport:
    def test_empty(self, tmp_path):
        written = emit_report({}, tmp_path)
        assert [p.name for p in written] == ["summary.json"]
        assert json.loads((tmp_path / "summary.json").read_text()) == {"methods": {}}

    def test_perfect_roc_points(self, tmp_path):
        roc, auc = roc_auc([2.0, 1.0], [1, -1])
        emit_report({"m": MethodMetrics(roc=roc, auc=auc)}, tmp_path)
        rows = list(csv.DictReader(open(tmp_path / "roc.csv")))
        assert [(float(r["fpr"]), float(r["tpr"])) for r in rows] == [(0, 0), (0, 1), (1, 1)]
        assert "<polyline" in (tmp_path / "roc.svg").read_text()

    def test_two_methods(self, tmp_path):
        emit_report({"vcf": MethodMetrics(ap=0.1), "mmvcf": MethodMetrics(ap=0.2, pr=[(1.0, 0.2)])},
                    tmp_path)
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert set(summary["methods"]) == {"vcf", "mmvcf"}
        assert (tmp_path / "pr.csv").exists() and not (tmp_path / "roc.csv").exists()
