"""
Unit tests for accuracy and calibration metrics
"""
import numpy as np
import pytest

from errors import ConfigError, ShapeError
from services.metrics import accuracy, build_report, calibration_bins, ece, mce, per_class_accuracy


def _binary(confidences, correct):
    """Two-class probabilities with the given max confidence; truth follows `correct`"""
    conf = np.asarray(confidences, dtype=np.float64)
    probs = np.stack([conf, 1.0 - conf], axis=1)
    truth = np.where(np.asarray(correct), 0, 1)
    return probs, truth


class TestAccuracy:
    """Test plain accuracy"""

    @pytest.mark.parametrize("preds,truth,expected", [
        ([0, 1, 2], [0, 1, 2], 1.0),
        ([1, 2, 0], [0, 1, 2], 0.0),
        ([0, 1, 1, 3], [0, 1, 2, 3], 0.75),
    ])
    def test_values(self, preds, truth, expected):
        """Fraction of exact matches"""
        assert accuracy(preds, truth) == expected

    def test_length_mismatch(self):
        """Predictions and labels must align"""
        with pytest.raises(ShapeError):
            accuracy([0, 1], [0, 1, 2])

    def test_per_class(self):
        """Classes without instances report None"""
        result = per_class_accuracy([0, 0, 1, 1], [0, 1, 1, 1], 3)
        assert result[0] == 1.0
        assert result[1] == pytest.approx(2 / 3)
        assert result[2] is None


class TestECE:
    """Test expected calibration error"""

    def test_hand_example(self):
        """Half at 0.9 all correct, half at 0.6 all wrong gives 0.35"""
        probs, truth = _binary([0.9] * 4 + [0.6] * 4, [True] * 4 + [False] * 4)
        value, _ = ece(probs, truth, 10)
        assert value == pytest.approx(0.35, abs=1e-12)

    def test_calibrated_toy(self):
        """Groups whose accuracy equals their confidence give zero"""
        correct = [True] * 9 + [False] + [True] * 6 + [False] * 4
        probs, truth = _binary([0.9] * 10 + [0.6] * 10, correct)
        value, _ = ece(probs, truth, 10)
        assert value == pytest.approx(0.0, abs=1e-12)

    def test_single_confident_instance(self):
        """One instance at confidence 1.0 that is correct"""
        value, bins = ece(np.array([[1.0, 0.0]]), np.array([0]), 10)
        assert value == 0.0
        assert bins[-1].count == 1

    def test_permutation_invariant(self, rng):
        """Shuffling instances leaves the value unchanged"""
        probs = rng.dirichlet(np.ones(4), size=60)
        truth = rng.integers(0, 4, size=60)
        perm = rng.permutation(60)
        assert ece(probs, truth)[0] == pytest.approx(ece(probs[perm], truth[perm])[0], abs=1e-12)

    @pytest.mark.parametrize("conf,n_correct", [(0.7, 3), (0.55, 10), (0.95, 0)])
    def test_constant_confidence(self, conf, n_correct):
        """A constant-confidence predictor scores |confidence - accuracy|"""
        correct = [True] * n_correct + [False] * (10 - n_correct)
        probs, truth = _binary([conf] * 10, correct)
        value, _ = ece(probs, truth, 10)
        assert value == pytest.approx(abs(conf - n_correct / 10), abs=1e-12)

    def test_bin_counts_sum_to_n(self, rng):
        """Every instance lands in exactly one bin"""
        probs = rng.dirichlet(np.ones(3), size=37)
        bins = calibration_bins(probs, rng.integers(0, 3, size=37), 7)
        assert len(bins) == 7
        assert sum(b.count for b in bins) == 37

    def test_empty_bins_report_zero(self):
        """Bins without instances carry zeros"""
        probs, truth = _binary([0.9], [True])
        bins = calibration_bins(probs, truth, 10)
        assert all(b.confidence == 0.0 and b.accuracy == 0.0 for b in bins[:9])

    def test_bin_count_must_be_positive(self):
        """n_bins < 1 is a config error"""
        with pytest.raises(ConfigError):
            ece(np.array([[0.5, 0.5]]), np.array([0]), 0)

    def test_ties_resolve_to_lowest_index(self):
        """A tied row predicts class 0"""
        bins = calibration_bins(np.array([[0.5, 0.5]]), np.array([0]), 2)
        assert bins[1].accuracy == 1.0


class TestMCE:
    """Test maximum calibration error"""

    def test_largest_gap(self):
        """The worst non-empty bin defines the value"""
        probs, truth = _binary([0.9] * 4 + [0.6] * 4, [True] * 4 + [False] * 4)
        _, bins = ece(probs, truth, 10)
        assert mce(bins) == pytest.approx(0.6)

    def test_no_instances(self):
        """Empty bins give zero"""
        assert mce(calibration_bins(np.zeros((0, 2)), np.zeros(0, dtype=int), 5)) == 0.0


class TestBuildReport:
    """Test report assembly"""

    def test_fields(self):
        """Accuracy, ECE and bins are filled in consistently"""
        probs, truth = _binary([0.9] * 4 + [0.6] * 4, [True] * 4 + [False] * 4)
        report = build_report(probs, probs.argmax(axis=1), truth, n_bins=10, seed=7, config={"q": 0.3})
        assert report.accuracy == 0.5
        assert report.ece == pytest.approx(0.35)
        assert report.n_eval == 8
        assert report.seed == 7
        assert report.config == {"q": 0.3}
        assert report.per_class_accuracy == [1.0, 0.0]
