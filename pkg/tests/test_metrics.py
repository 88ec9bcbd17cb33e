"""
Tests de la matriz de confusión y del mIoU.
"""

import numpy as np
import pytest
import torch

from src.core.metrics import ConfusionAccumulator
from src.models.eval_report import EvalReport
from src.models.sample import IGNORE_INDEX


def _report(pred, label, k):
    acc = ConfusionAccumulator(k)
    acc.update(torch.tensor(pred), torch.tensor(label))
    return acc.report()


class TestConfusionAccumulator:
    """Tests de ConfusionAccumulator."""

    def test_perfect_prediction(self):
        label = [[0, 1], [2, 2]]
        report = _report(label, label, 3)
        assert report.iou == [1.0, 1.0, 1.0]
        assert report.miou == 1.0

    def test_half_and_zero(self):
        """Ground truth [0, 1] y predicción [0, 0] → IoU [0.5, 0.0], mIoU 0.25."""
        report = _report([[0, 0]], [[0, 1]], 2)
        assert report.iou == [0.5, 0.0]
        assert report.miou == pytest.approx(0.25)

    def test_absent_class_excluded(self):
        report = _report([[0, 1]], [[0, 1]], 3)
        assert report.iou[2] is None
        assert report.miou == 1.0

    def test_predicted_only_class_not_averaged(self):
        """Una clase solo predicha tiene IoU 0 pero no entra en la media."""
        report = _report([[2, 1]], [[0, 1]], 3)
        assert report.iou == [0.0, 1.0, 0.0]
        assert report.miou == pytest.approx(0.5)

    def test_ignore_pixels_skipped(self):
        report = _report([[0, 1]], [[0, IGNORE_INDEX]], 2)
        assert report.fp == [0, 0]
        assert report.iou == [1.0, None]

    def test_permutation_invariant(self, rng):
        pred = rng.integers(0, 4, size=(6, 6))
        label = rng.integers(0, 4, size=(6, 6))
        perm = rng.permutation(36)
        a = _report(pred.tolist(), label.tolist(), 4)
        b = _report(pred.ravel()[perm].reshape(6, 6).tolist(),
                    label.ravel()[perm].reshape(6, 6).tolist(), 4)
        assert a.iou == b.iou

    def test_brute_force(self, rng):
        for _ in range(50):
            k = int(rng.integers(2, 6))
            pred = rng.integers(0, k, size=(5, 7))
            label = rng.integers(0, k, size=(5, 7))
            report = _report(pred.tolist(), label.tolist(), k)
            for c in range(k):
                tp = int(((pred == c) & (label == c)).sum())
                union = int(((pred == c) | (label == c)).sum())
                expected = None if union == 0 else tp / union
                assert report.iou[c] == pytest.approx(expected)

    def test_accumulates_over_images(self):
        acc = ConfusionAccumulator(2)
        acc.update(torch.tensor([[0]]), torch.tensor([[0]]))
        acc.update(torch.tensor([[0]]), torch.tensor([[1]]))
        assert np.array_equal(acc.matrix, [[1, 0], [1, 0]])

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            ConfusionAccumulator(2).update(torch.zeros(2, 2, dtype=torch.int64),
                                           torch.zeros(2, 3, dtype=torch.int64))

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            ConfusionAccumulator(2).update(torch.tensor([[2]]), torch.tensor([[0]]))


class TestEvalReport:
    def test_dict_round_trip(self):
        report = _report([[0, 0]], [[0, 1]], 2)
        report.step = 12
        loaded = EvalReport.from_dict(report.to_dict())
        assert loaded.step == 12 and loaded.iou == report.iou and loaded.miou == report.miou

    def test_dataframe_percent(self):
        report = _report([[0, 0]], [[0, 1]], 2)
        report.class_names = ["carretera", "coche"]
        df = report.to_dataframe()
        assert list(df["clase"]) == ["carretera", "coche"]
        assert list(df["IoU"]) == [50.0, 0.0]
