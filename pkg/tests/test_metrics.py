"""Tests for detection and diagnosis metrics."""

import numpy as np
import pytest

from otdr_guard.errors import DataContractError
from otdr_guard.models import AeArchitecture, DetectionCounts, EvaluationConfig, FaultLabel
from otdr_guard.metrics import (
    accuracy_by_snr,
    confusion_matrix,
    count_detections,
    detection_metrics,
    detection_report,
    diagnosis_report,
    evaluate_detection,
    roc_and_auc,
    snr_bin_indices,
    snr_bins,
    snr_trend,
    sweep_threshold_scores,
    threshold_candidates,
)
from otdr_guard.networks import init_ae_model


def mann_whitney_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y]
    neg = [s for s, y in zip(scores, labels) if not y]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


class TestDetectionMetrics:
    """Precision, recall and F1."""

    def test_counts(self):
        """Faulty is the positive class."""
        counts = count_detections([True, True, False, False], [True, False, True, False])
        assert (counts.tp, counts.fn, counts.fp, counts.tn) == (1, 1, 1, 1)
        assert counts.total == 4

    def test_f1_is_harmonic_mean(self):
        """F1 = 2PR / (P + R)."""
        metrics = detection_metrics(DetectionCounts(tp=9, fp=1, fn=3, tn=7))
        assert metrics.precision == pytest.approx(0.9)
        assert metrics.recall == pytest.approx(0.75)
        assert metrics.f1 == pytest.approx(2 * 0.9 * 0.75 / 1.65)
        assert not metrics.degenerate

    def test_perfect(self):
        """No errors gives 1, 1, 1."""
        metrics = detection_metrics(DetectionCounts(tp=5, tn=5))
        assert (metrics.precision, metrics.recall, metrics.f1) == (1.0, 1.0, 1.0)

    def test_degenerate(self):
        """Nothing flagged: precision undefined, reported as 0 and flagged degenerate."""
        metrics = detection_metrics(DetectionCounts(fn=5, tn=3))
        assert (metrics.precision, metrics.recall, metrics.f1) == (0.0, 0.0, 0.0)
        assert metrics.degenerate

    def test_matches_recount(self):
        """P, R and F1 agree with a direct recount of labels against predictions."""
        rng = np.random.default_rng(5)
        labels = rng.uniform(size=300) < 0.4
        predicted = rng.uniform(size=300) < 0.5
        tp = sum(1 for y, p in zip(labels, predicted) if y and p)
        fp = sum(1 for y, p in zip(labels, predicted) if not y and p)
        fn = sum(1 for y, p in zip(labels, predicted) if y and not p)
        metrics = detection_metrics(count_detections(labels, predicted))
        precision, recall = tp / (tp + fp), tp / (tp + fn)
        assert metrics.precision == pytest.approx(precision, abs=1e-12)
        assert metrics.recall == pytest.approx(recall, abs=1e-12)
        assert metrics.f1 == pytest.approx(2 * precision * recall / (precision + recall), abs=1e-12)

    def test_length_mismatch(self):
        """Labels and predictions must align."""
        with pytest.raises(ValueError):
            count_detections([True], [True, False])


class TestRoc:
    """ROC curve and AUC."""

    def test_auc_matches_rank_statistic(self):
        """Trapezoidal AUC equals the Mann-Whitney statistic, ties counted half."""
        rng = np.random.default_rng(0)
        scores = np.round(rng.uniform(0.0, 1.0, size=60), 1)
        labels = rng.uniform(size=60) < 0.4
        labels[0], labels[1] = True, False
        roc = roc_and_auc(scores, labels)
        assert roc.auc == pytest.approx(mann_whitney_auc(scores, labels))

    def test_points(self):
        """One point per distinct score plus both endpoints."""
        scores = [0.1, 0.4, 0.4, 0.8]
        roc = roc_and_auc(scores, [False, False, True, True])
        assert len(roc.points) == 3 + 2
        first, last = roc.points[0], roc.points[-1]
        assert (first.threshold, first.fpr, first.tpr) == (np.inf, 0.0, 0.0)
        assert (last.threshold, last.fpr, last.tpr) == (-np.inf, 1.0, 1.0)
        fprs = [p.fpr for p in roc.points]
        assert fprs == sorted(fprs)

    def test_separable(self):
        """Perfect ranking gives AUC 1; reversed ranking gives 0."""
        assert roc_and_auc([0.1, 0.2, 0.8, 0.9], [False, False, True, True]).auc == 1.0
        assert roc_and_auc([0.9, 0.8, 0.2, 0.1], [False, False, True, True]).auc == 0.0

    def test_random_labels(self):
        """Labels independent of the scores give an AUC near one half."""
        rng = np.random.default_rng(11)
        scores = rng.uniform(size=10_000)
        labels = rng.uniform(size=10_000) < 0.5
        assert roc_and_auc(scores, labels).auc == pytest.approx(0.5, abs=0.02)

    def test_keeps_collinear_points(self):
        """Every distinct score keeps its point, even on a straight stretch of the curve."""
        scores = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6]
        roc = roc_and_auc(scores, [False, False, False, True, True, True])
        assert len(roc.points) == 6 + 2
        assert [p.threshold for p in roc.points[1:-1]] == [0.6, 0.5, 0.4, 0.3, 0.2, 0.1]

    def test_single_class(self):
        """ROC needs both classes."""
        with pytest.raises(DataContractError):
            roc_and_auc([0.1, 0.2], [True, True])


class TestThresholdSweep:
    """F1-maximizing threshold calibration."""

    def test_candidates(self):
        """Midpoints plus a point just below the minimum and the maximum."""
        candidates = threshold_candidates([0.2, 0.4, 0.4, 0.8])
        assert candidates[0] < 0.2
        assert candidates[1:].tolist() == pytest.approx([0.3, 0.6, 0.8])

    def test_candidates_never_negative(self):
        """A zero score keeps the lowest candidate at 0."""
        assert threshold_candidates([0.0, 1.0])[0] == 0.0

    def test_separated_classes(self):
        """Separable scores calibrate to the midpoint of the gap."""
        sweep = sweep_threshold_scores([0.1, 0.2, 0.5, 0.6], [False, False, True, True])
        assert sweep.theta == pytest.approx(0.35)
        assert sweep.f1 == 1.0
        thetas = [p.theta for p in sweep.curve]
        assert thetas == sorted(thetas)

    def test_best_is_curve_argmax(self):
        """The chosen theta carries the maximum F1 of the curve."""
        rng = np.random.default_rng(3)
        scores = rng.uniform(size=50)
        labels = rng.uniform(size=50) < scores
        sweep = sweep_threshold_scores(scores, labels)
        assert sweep.f1 == max(p.f1 for p in sweep.curve)
        flagged = scores > sweep.theta
        assert detection_metrics(count_detections(labels, flagged)).f1 == pytest.approx(sweep.f1)

    def test_tie_goes_to_smaller_theta(self):
        """Equal F1 at two thresholds picks the smaller."""
        scores = [0.1, 0.2, 0.3, 0.4]
        labels = [True, False, False, True]
        sweep = sweep_threshold_scores(scores, labels)
        assert sweep.f1 == pytest.approx(2 / 3)
        assert sweep.theta < 0.1

    def test_single_class(self):
        """Calibration needs both classes."""
        with pytest.raises(DataContractError):
            sweep_threshold_scores([0.1, 0.2], [False, False])


class TestSnrBins:
    """SNR binning."""

    def test_default_bins(self):
        """Six 5 dB bins up to 30 dB."""
        bins = snr_bins(EvaluationConfig())
        assert bins[0] == (0.0, 5.0)
        assert bins[-1] == (25.0, 30.0)
        assert len(bins) == 6

    def test_upper_edge_clamps(self):
        """30 dB and above fall in the last bin; 5 dB starts the second."""
        index = snr_bin_indices([0.0, 4.99, 5.0, 30.0, 37.0], EvaluationConfig())
        assert index.tolist() == [0, 0, 1, 5, 5]

    def test_empty_bins_omitted(self):
        """Only populated bins are reported."""
        bins = accuracy_by_snr([1.0, 2.0, 12.0, 35.0], [True, False, True, True], EvaluationConfig())
        assert [(b.low_db, b.count, b.accuracy) for b in bins] == [
            (0.0, 2, 0.5), (10.0, 1, 1.0), (25.0, 1, 1.0)
        ]

    def test_trend(self):
        """Monotone improvement has rank correlation 1; constant values have none."""
        assert snr_trend([2.5, 7.5, 12.5], [0.2, 0.5, 0.9]) == pytest.approx(1.0)
        assert snr_trend([2.5, 7.5], [0.5, 0.5]) is None
        assert snr_trend([2.5], [0.5]) is None


class TestReports:
    """Detection and diagnosis reports."""

    def test_detection_report(self):
        """Counts at theta, ROC and curve over the same scores."""
        scores = [0.1, 0.2, 0.5, 0.6]
        labels = [False, True, True, True]
        report = detection_report(scores, labels, [3.0, 8.0, 13.0, 18.0], theta=0.15)
        assert (report.counts.tp, report.counts.fp, report.counts.fn, report.counts.tn) == (3, 0, 0, 1)
        assert report.metrics.f1 == 1.0
        assert report.roc.auc == 1.0
        assert len(report.accuracy_by_snr_bin) == 4

    def test_uncalibrated_model(self):
        """Evaluating without a theta is refused."""
        model = init_ae_model(AeArchitecture(hidden_sizes=(2, 2)), zeros=True)
        with pytest.raises(DataContractError, match="calibrate"):
            evaluate_detection(model, [])

    def test_confusion_matrix(self):
        """Rows are true classes; row sums are class supports."""
        matrix = confusion_matrix([0, 0, 1, 3], [0, 2, 1, 3])
        assert matrix.tolist() == [[1, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 0], [0, 0, 0, 1]]
        assert matrix.sum(axis=1).tolist() == [2, 1, 0, 1]

    def test_perfect_diagnosis(self):
        """A perfect predictor has a diagonal matrix and zero RMSE."""
        true_idx = [0, 1, 2, 3, 0]
        positions = [3, 10, 15, 20, 27]
        report = diagnosis_report(true_idx, true_idx, positions, positions, [1.0, 6.0, 11.0, 16.0, 21.0], 0.1)
        assert report.accuracy == 1.0
        assert report.rmse_index == 0.0 and report.rmse_m == 0.0
        assert report.physical_attack_accuracy == 1.0
        assert report.top_confusions == []
        assert all(stat.f1 == 1.0 for stat in report.per_class)

    def test_errors_and_confusions(self):
        """RMSE in indices and meters, physical attack accuracy and ranked confusions."""
        true_idx = [0, 0, 0, 1, 1, 2]
        pred_idx = [1, 1, 2, 0, 0, 2]
        true_pos = [5, 5, 5, 5, 5, 5]
        pred_pos = [6, 4, 7, 5, 5, 5]
        report = diagnosis_report(true_idx, pred_idx, true_pos, pred_pos, [10.0] * 6, 0.5)
        assert report.rmse_index == pytest.approx(np.sqrt(6 / 6))
        assert report.rmse_m == pytest.approx(0.5 * np.sqrt(1.0))
        assert report.physical_attack_accuracy == 0.0
        top = [(p.true_label, p.predicted_label, p.count) for p in report.top_confusions]
        assert top == [
            (FaultLabel.FIBER_CUT, FaultLabel.FIBER_TAPPING, 2),
            (FaultLabel.FIBER_TAPPING, FaultLabel.FIBER_CUT, 2),
            (FaultLabel.FIBER_CUT, FaultLabel.BAD_SPLICE, 1),
        ]
        splice = report.per_class[2]
        assert (splice.support, splice.precision, splice.recall) == (1, 0.5, 1.0)

    def test_accuracy_trend(self):
        """Accuracy rising with SNR gives a positive trend."""
        true_idx = [0, 0, 0, 0]
        pred_idx = [1, 1, 0, 0]
        snrs = [1.0, 6.0, 7.0, 12.0]
        report = diagnosis_report(true_idx, pred_idx, [0] * 4, [0] * 4, snrs, 0.1)
        assert [b.accuracy for b in report.accuracy_by_snr_bin] == [0.0, 0.5, 1.0]
        assert report.accuracy_trend == pytest.approx(1.0)
        assert report.rmse_trend is None

    def test_empty_diagnosis(self):
        """No faulty samples, no report."""
        with pytest.raises(DataContractError):
            diagnosis_report([], [], [], [], [], 0.1)
