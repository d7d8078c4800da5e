"""Detection and diagnosis metrics.

Scores are anomaly scores (higher means more anomalous) and labels are ``True``
for faulty sequences. A sequence is flagged anomalous when its score is
strictly greater than the threshold.
"""

from __future__ import annotations

from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import spearmanr
from sklearn.metrics import confusion_matrix as sk_confusion_matrix
from sklearn.metrics import precision_recall_fscore_support, roc_auc_score, roc_curve

from .errors import DataContractError
from .models import (
    FAULT_CLASSES,
    AccuracyBin,
    ClassStat,
    ConfusionPair,
    DetectionCounts,
    DetectionMetrics,
    DetectionReport,
    DiagnosisReport,
    EvaluationConfig,
    FaultLabel,
    RmseBin,
    RocCurve,
    RocPoint,
    SequenceSample,
    ThresholdPoint,
    ThresholdSweep,
)
from .networks import (
    AeModel,
    DiagModel,
    anomaly_scores,
    classify_scores,
    diagnose,
    predicted_position_index,
)

PHYSICAL_ATTACKS = (FaultLabel.FIBER_CUT, FaultLabel.FIBER_TAPPING)


def _as_labels(labels: Sequence[bool]) -> np.ndarray:
    return np.asarray(labels, dtype=bool)


def _require_both_classes(labels: np.ndarray) -> None:
    if labels.size == 0 or labels.all() or not labels.any():
        raise DataContractError("need both normal and faulty samples")


# --------------------------------------------------------------------------- detection


def count_detections(labels: Sequence[bool], predicted: Sequence[bool]) -> DetectionCounts:
    """Confusion counts with faulty as the positive class."""
    y = _as_labels(labels)
    p = _as_labels(predicted)
    if y.shape != p.shape:
        raise ValueError(f"{y.size} labels but {p.size} predictions")
    tn, fp, fn, tp = sk_confusion_matrix(y, p, labels=[False, True]).ravel()
    return DetectionCounts(tp=int(tp), tn=int(tn), fp=int(fp), fn=int(fn))


def _expand_counts(counts: DetectionCounts) -> Tuple[np.ndarray, np.ndarray]:
    """Label and prediction vectors reproducing ``counts``."""
    sizes = [counts.tp, counts.fp, counts.fn, counts.tn]
    y = np.repeat([True, False, True, False], sizes)
    p = np.repeat([True, True, False, False], sizes)
    return y, p


def detection_metrics(counts: DetectionCounts) -> DetectionMetrics:
    """Precision, recall and F1; undefined ratios are 0 and set ``degenerate``."""
    y, p = _expand_counts(counts)
    precision, recall, f1, _ = precision_recall_fscore_support(
        y, p, average="binary", pos_label=True, zero_division=0
    )
    return DetectionMetrics(
        precision=float(precision),
        recall=float(recall),
        f1=float(f1),
        degenerate=counts.tp == 0,
    )


def roc_and_auc(scores: Sequence[float], labels: Sequence[bool]) -> RocCurve:
    """ROC with one point per distinct score plus both endpoints; trapezoidal AUC."""
    s = np.asarray(scores, dtype=np.float64)
    y = _as_labels(labels)
    if s.shape != y.shape:
        raise ValueError(f"{s.size} scores but {y.size} labels")
    _require_both_classes(y)

    fpr, tpr, thresholds = roc_curve(y, s, drop_intermediate=False)
    fpr = np.concatenate([fpr, [1.0]])
    tpr = np.concatenate([tpr, [1.0]])
    cut = np.concatenate([[np.inf], thresholds[1:], [-np.inf]])
    points = [
        RocPoint(threshold=float(t), fpr=float(f), tpr=float(r)) for t, f, r in zip(cut, fpr, tpr)
    ]
    return RocCurve(points=points, auc=float(roc_auc_score(y, s)))


def threshold_candidates(scores: Sequence[float]) -> np.ndarray:
    """Midpoints between consecutive distinct scores plus both extremes, ascending.

    The low extreme sits just below the minimum score so every sample can be
    flagged, except that it never goes below 0: a score of exactly 0 is never
    anomalous under a non-negative threshold. The high extreme is the maximum
    score, flagging none.
    """
    distinct = np.unique(np.asarray(scores, dtype=np.float64))
    if distinct.size == 0:
        raise DataContractError("no scores to calibrate on")
    low = max(0.0, float(np.nextafter(distinct[0], -np.inf)))
    mids = (distinct[:-1] + distinct[1:]) / 2.0
    return np.unique(np.concatenate([[low], mids, [distinct[-1]]]))


def sweep_threshold_scores(scores: Sequence[float], labels: Sequence[bool]) -> ThresholdSweep:
    """F1-maximizing threshold over :func:`threshold_candidates`; ties go to the smaller theta."""
    s = np.asarray(scores, dtype=np.float64)
    y = _as_labels(labels)
    if s.shape != y.shape:
        raise ValueError(f"{s.size} scores but {y.size} labels")
    _require_both_classes(y)

    candidates = threshold_candidates(s)
    pos_scores = np.sort(s[y])
    neg_scores = np.sort(s[~y])
    # samples with score > theta
    tp = pos_scores.size - np.searchsorted(pos_scores, candidates, side="right")
    fp = neg_scores.size - np.searchsorted(neg_scores, candidates, side="right")
    flagged = tp + fp
    precision = np.divide(tp, flagged, out=np.zeros(candidates.size), where=flagged > 0)
    recall = tp / pos_scores.size
    total = precision + recall
    f1 = np.divide(2.0 * precision * recall, total, out=np.zeros(candidates.size), where=total > 0)

    curve = [
        ThresholdPoint(theta=float(theta), precision=float(p), recall=float(r), f1=float(f))
        for theta, p, r, f in zip(candidates, precision, recall, f1)
    ]
    best = int(np.argmax(f1))
    return ThresholdSweep(theta=curve[best].theta, f1=curve[best].f1, curve=curve)


# --------------------------------------------------------------------------- SNR bins


def snr_bins(evaluation: EvaluationConfig) -> List[Tuple[float, float]]:
    width = evaluation.snr_bin_width_db
    count = max(1, int(np.ceil(evaluation.snr_bin_max_db / width - 1e-9)))
    return [(i * width, min((i + 1) * width, evaluation.snr_bin_max_db)) for i in range(count)]


def snr_bin_indices(snrs: Sequence[float], evaluation: EvaluationConfig) -> np.ndarray:
    """Bin of each SNR; values past the last edge land in the last bin."""
    count = len(snr_bins(evaluation))
    raw = np.floor(np.asarray(snrs, dtype=np.float64) / evaluation.snr_bin_width_db)
    return np.clip(raw, 0, count - 1).astype(np.int64)


def accuracy_by_snr(
    snrs: Sequence[float], correct: Sequence[bool], evaluation: EvaluationConfig
) -> List[AccuracyBin]:
    """Accuracy per SNR bin; empty bins are left out."""
    hits = np.asarray(correct, dtype=bool)
    index = snr_bin_indices(snrs, evaluation)
    out = []
    for i, (low, high) in enumerate(snr_bins(evaluation)):
        mask = index == i
        if mask.any():
            out.append(AccuracyBin(
                low_db=low, high_db=high, count=int(mask.sum()), accuracy=float(hits[mask].mean())
            ))
    return out


def _rmse(errors: np.ndarray) -> float:
    return float(np.sqrt(np.mean(errors.astype(np.float64) ** 2)))


def rmse_by_snr(
    snrs: Sequence[float],
    index_errors: Sequence[int],
    meters_per_sample: float,
    evaluation: EvaluationConfig,
) -> List[RmseBin]:
    errors = np.asarray(index_errors)
    index = snr_bin_indices(snrs, evaluation)
    out = []
    for i, (low, high) in enumerate(snr_bins(evaluation)):
        mask = index == i
        if mask.any():
            rmse = _rmse(errors[mask])
            out.append(RmseBin(
                low_db=low, high_db=high, count=int(mask.sum()),
                rmse_index=rmse, rmse_m=rmse * meters_per_sample,
            ))
    return out


def snr_trend(centers: Sequence[float], values: Sequence[float]) -> Optional[float]:
    """Spearman rank correlation of a binned metric against bin centre; None when undefined."""
    if len(values) < 2 or len(set(values)) < 2:
        return None
    rho = spearmanr(centers, values).correlation
    return None if np.isnan(rho) else float(rho)


def _centers(bins: Sequence) -> List[float]:
    return [(b.low_db + b.high_db) / 2.0 for b in bins]


# --------------------------------------------------------------------------- reports


def detection_report(
    scores: Sequence[float],
    labels: Sequence[bool],
    snrs: Sequence[float],
    theta: float,
    evaluation: Optional[EvaluationConfig] = None,
) -> DetectionReport:
    """Detection report from precomputed anomaly scores."""
    evaluation = evaluation or EvaluationConfig()
    y = _as_labels(labels)
    predicted = classify_scores(scores, theta)
    counts = count_detections(y, predicted)
    return DetectionReport(
        theta=theta,
        counts=counts,
        metrics=detection_metrics(counts),
        roc=roc_and_auc(scores, y),
        threshold_curve=sweep_threshold_scores(scores, y).curve,
        accuracy_by_snr_bin=accuracy_by_snr(snrs, predicted == y, evaluation),
    )


def evaluate_detection(
    model: AeModel,
    samples: Sequence[SequenceSample],
    theta: Optional[float] = None,
    evaluation: Optional[EvaluationConfig] = None,
) -> DetectionReport:
    """Score ``samples`` with the autoencoder and report detection quality at ``theta``.

    ``theta`` defaults to the calibrated value in the model metadata.
    """
    theta = model.metadata.theta if theta is None else theta
    if theta is None:
        raise DataContractError("autoencoder is not calibrated; run 'otdrguard calibrate' first")
    scores = anomaly_scores(model, samples)
    return detection_report(
        scores,
        [s.is_faulty for s in samples],
        [s.snr_db for s in samples],
        theta,
        evaluation,
    )


def confusion_matrix(true_idx: Sequence[int], pred_idx: Sequence[int]) -> np.ndarray:
    """Rows are true classes, columns predicted, both in ``FAULT_CLASSES`` order."""
    labels = list(range(len(FAULT_CLASSES)))
    return sk_confusion_matrix(true_idx, pred_idx, labels=labels).astype(np.int64)


def _class_stats(true_idx: np.ndarray, pred_idx: np.ndarray) -> List[ClassStat]:
    precision, recall, f1, support = precision_recall_fscore_support(
        true_idx, pred_idx, labels=list(range(len(FAULT_CLASSES))), average=None, zero_division=0
    )
    return [
        ClassStat(
            label=label,
            support=int(support[i]),
            accuracy=float(recall[i]),
            precision=float(precision[i]),
            recall=float(recall[i]),
            f1=float(f1[i]),
        )
        for i, label in enumerate(FAULT_CLASSES)
    ]


def _top_confusions(matrix: np.ndarray) -> List[ConfusionPair]:
    pairs = [
        ConfusionPair(
            true_label=FAULT_CLASSES[i], predicted_label=FAULT_CLASSES[j], count=int(matrix[i, j])
        )
        for i in range(matrix.shape[0])
        for j in range(matrix.shape[1])
        if i != j and matrix[i, j] > 0
    ]
    # stable sort keeps row-major order among equal counts
    return sorted(pairs, key=lambda p: -p.count)


def diagnosis_report(
    true_idx: Sequence[int],
    pred_idx: Sequence[int],
    true_pos: Sequence[int],
    pred_pos: Sequence[int],
    snrs: Sequence[float],
    meters_per_sample: float,
    evaluation: Optional[EvaluationConfig] = None,
) -> DiagnosisReport:
    """Diagnosis report from class indices and position indices."""
    evaluation = evaluation or EvaluationConfig()
    true_idx = np.asarray(true_idx, dtype=np.int64)
    pred_idx = np.asarray(pred_idx, dtype=np.int64)
    if true_idx.size == 0:
        raise DataContractError("no labeled faulty samples to evaluate")
    errors = np.asarray(pred_pos, dtype=np.int64) - np.asarray(true_pos, dtype=np.int64)

    matrix = confusion_matrix(true_idx, pred_idx)
    correct = true_idx == pred_idx
    attack_rows = [FAULT_CLASSES.index(label) for label in PHYSICAL_ATTACKS]
    attack_total = int(matrix[attack_rows].sum())
    attack_hits = int(sum(matrix[i, i] for i in attack_rows))

    acc_bins = accuracy_by_snr(snrs, correct, evaluation)
    rmse_bins = rmse_by_snr(snrs, errors, meters_per_sample, evaluation)
    rmse = _rmse(errors)
    return DiagnosisReport(
        confusion_matrix=matrix.tolist(),
        accuracy=float(correct.mean()),
        per_class=_class_stats(true_idx, pred_idx),
        physical_attack_accuracy=attack_hits / attack_total if attack_total else None,
        accuracy_by_snr_bin=acc_bins,
        rmse_index=rmse,
        rmse_m=rmse * meters_per_sample,
        rmse_by_snr_bin=rmse_bins,
        accuracy_trend=snr_trend(_centers(acc_bins), [b.accuracy for b in acc_bins]),
        rmse_trend=snr_trend(_centers(rmse_bins), [b.rmse_index for b in rmse_bins]),
        top_confusions=_top_confusions(matrix),
    )


def evaluate_diag(
    model: DiagModel,
    samples: Sequence[SequenceSample],
    meters_per_sample: float,
    evaluation: Optional[EvaluationConfig] = None,
) -> DiagnosisReport:
    """Classify and localize faulty ``samples`` and report against their labels."""
    if any(not s.is_faulty for s in samples):
        raise DataContractError("diagnosis evaluation takes faulty samples only")
    output = diagnose(model, samples)
    pred_idx = np.argmax(output.class_probs, axis=-1)
    pred_pos = [predicted_position_index(p) for p in output.position_norm]
    return diagnosis_report(
        [FAULT_CLASSES.index(s.label) for s in samples],
        pred_idx,
        [s.position_index for s in samples],
        pred_pos,
        [s.snr_db for s in samples],
        meters_per_sample,
        evaluation,
    )
