"""CSV and plain-text report files.

Column layouts (stable):

- ``threshold_curve.csv``: theta, precision, recall, f1
- ``roc.csv``: threshold, fpr, tpr (first row +inf, last row -inf)
- ``detection_accuracy_by_snr.csv`` / ``diagnosis_accuracy_by_snr.csv``:
  low_db, high_db, count, accuracy
- ``confusion_matrix.csv``: true_label then one column per predicted label
- ``per_class.csv``: label, support, accuracy, precision, recall, f1
- ``rmse_by_snr.csv``: low_db, high_db, count, rmse_index, rmse_m
- ``loss_history.csv``: epoch, train_loss, val_loss, classification_loss, position_loss

Floats are written with ``repr`` and rows end in ``\\n`` so identical reports give
identical bytes.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Any, Iterable, List, Optional, Sequence

from ..models import (
    AccuracyBin,
    DetectionReport,
    DiagnosisReport,
    EpochLog,
    EvalReport,
    RmseBin,
    ThresholdPoint,
)


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    if hasattr(value, "value"):
        return str(value.value)
    return str(value)


def write_rows(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])
    return path


def write_threshold_curve(curve: Sequence[ThresholdPoint], path: Path) -> Path:
    return write_rows(
        path,
        ("theta", "precision", "recall", "f1"),
        ((p.theta, p.precision, p.recall, p.f1) for p in curve),
    )


def write_loss_history(history: Sequence[EpochLog], path: Path) -> Path:
    return write_rows(
        path,
        ("epoch", "train_loss", "val_loss", "classification_loss", "position_loss"),
        (
            (h.epoch, h.train_loss, h.val_loss, h.classification_loss, h.position_loss)
            for h in history
        ),
    )


def _write_accuracy_bins(bins: Sequence[AccuracyBin], path: Path) -> Path:
    return write_rows(
        path,
        ("low_db", "high_db", "count", "accuracy"),
        ((b.low_db, b.high_db, b.count, b.accuracy) for b in bins),
    )


def _write_rmse_bins(bins: Sequence[RmseBin], path: Path) -> Path:
    return write_rows(
        path,
        ("low_db", "high_db", "count", "rmse_index", "rmse_m"),
        ((b.low_db, b.high_db, b.count, b.rmse_index, b.rmse_m) for b in bins),
    )


def write_detection_report(report: DetectionReport, directory: Path) -> List[Path]:
    return [
        write_threshold_curve(report.threshold_curve, directory / "threshold_curve.csv"),
        write_rows(
            directory / "roc.csv",
            ("threshold", "fpr", "tpr"),
            ((p.threshold, p.fpr, p.tpr) for p in report.roc.points),
        ),
        _write_accuracy_bins(report.accuracy_by_snr_bin, directory / "detection_accuracy_by_snr.csv"),
    ]


def write_diagnosis_report(report: DiagnosisReport, directory: Path) -> List[Path]:
    labels = [label.value for label in report.labels]
    return [
        write_rows(
            directory / "confusion_matrix.csv",
            ["true_label"] + labels,
            ([label] + row for label, row in zip(labels, report.confusion_matrix)),
        ),
        write_rows(
            directory / "per_class.csv",
            ("label", "support", "accuracy", "precision", "recall", "f1"),
            (
                (c.label, c.support, c.accuracy, c.precision, c.recall, c.f1)
                for c in report.per_class
            ),
        ),
        _write_accuracy_bins(report.accuracy_by_snr_bin, directory / "diagnosis_accuracy_by_snr.csv"),
        _write_rmse_bins(report.rmse_by_snr_bin, directory / "rmse_by_snr.csv"),
    ]


def _fmt(value: Optional[float], digits: int = 4) -> str:
    return "n/a" if value is None else f"{value:.{digits}f}"


def summary_lines(report: EvalReport) -> List[str]:
    """Human-readable summary of a report."""
    lines: List[str] = []
    det = report.detection
    if det is not None:
        c = det.counts
        lines += [
            "Anomaly detection",
            f"  theta            {det.theta!r}",
            f"  samples          {c.total} (tp {c.tp}, tn {c.tn}, fp {c.fp}, fn {c.fn})",
            f"  precision        {_fmt(det.metrics.precision)}",
            f"  recall           {_fmt(det.metrics.recall)}",
            f"  f1               {_fmt(det.metrics.f1)}"
            + ("  (degenerate)" if det.metrics.degenerate else ""),
            f"  auc              {_fmt(det.roc.auc)}",
        ]
        for b in det.accuracy_by_snr_bin:
            lines.append(f"  accuracy {b.low_db:g}-{b.high_db:g} dB  {_fmt(b.accuracy)} (n={b.count})")
    diag = report.diagnosis
    if diag is not None:
        if lines:
            lines.append("")
        lines += [
            "Fault diagnosis",
            f"  accuracy         {_fmt(diag.accuracy)}",
            f"  physical attacks {_fmt(diag.physical_attack_accuracy)}",
            f"  rmse             {_fmt(diag.rmse_index)} samples / {_fmt(diag.rmse_m)} m",
            f"  accuracy trend   {_fmt(diag.accuracy_trend, 3)} (Spearman vs SNR)",
            f"  rmse trend       {_fmt(diag.rmse_trend, 3)} (Spearman vs SNR)",
        ]
        for c in diag.per_class:
            lines.append(
                f"  {c.label.value:<16} accuracy {_fmt(c.accuracy)}  f1 {_fmt(c.f1)}  (n={c.support})"
            )
        for b in diag.accuracy_by_snr_bin:
            lines.append(f"  accuracy {b.low_db:g}-{b.high_db:g} dB  {_fmt(b.accuracy)} (n={b.count})")
        for b in diag.rmse_by_snr_bin:
            lines.append(
                f"  rmse {b.low_db:g}-{b.high_db:g} dB      {_fmt(b.rmse_index)} samples / "
                f"{_fmt(b.rmse_m)} m (n={b.count})"
            )
        for pair in diag.top_confusions[:5]:
            lines.append(
                f"  confused {pair.true_label.value} -> {pair.predicted_label.value}: {pair.count}"
            )
    return lines


def emit_report(report: EvalReport, directory: Path) -> List[Path]:
    """Write every CSV of ``report`` plus ``summary.txt`` into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written: List[Path] = []
    if report.detection is not None:
        written += write_detection_report(report.detection, directory)
    if report.diagnosis is not None:
        written += write_diagnosis_report(report.diagnosis, directory)
    summary = directory / "summary.txt"
    with open(summary, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(summary_lines(report)) + "\n")
    written.append(summary)
    return written
