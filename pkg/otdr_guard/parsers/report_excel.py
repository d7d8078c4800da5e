"""Excel workbook of an evaluation report."""

from __future__ import annotations

from pathlib import Path
from typing import Any, List, Sequence, Tuple

from openpyxl import Workbook
from openpyxl.styles import Alignment, Border, Font, PatternFill, Side
from openpyxl.utils import get_column_letter
from openpyxl.worksheet.worksheet import Worksheet

from ..models import EvalReport
from .report_csv import summary_lines

HEADER_FONT = Font(bold=True, color="FFFFFF")
HEADER_FILL = PatternFill(start_color="4472C4", end_color="4472C4", fill_type="solid")
HEADER_ALIGNMENT = Alignment(horizontal="center", vertical="center")
THIN_BORDER = Border(
    left=Side(style="thin"),
    right=Side(style="thin"),
    top=Side(style="thin"),
    bottom=Side(style="thin"),
)
# Highlights the correct-class diagonal of the confusion matrix.
DIAGONAL_FILL = PatternFill(start_color="C6EFCE", end_color="C6EFCE", fill_type="solid")


def _table(ws: Worksheet, columns: Sequence[Tuple[str, int]], rows: Sequence[Sequence[Any]]) -> None:
    for col_idx, (header, width) in enumerate(columns, start=1):
        cell = ws.cell(row=1, column=col_idx, value=header)
        cell.font = HEADER_FONT
        cell.fill = HEADER_FILL
        cell.alignment = HEADER_ALIGNMENT
        cell.border = THIN_BORDER
        ws.column_dimensions[get_column_letter(col_idx)].width = width

    for row_idx, row in enumerate(rows, start=2):
        for col_idx, value in enumerate(row, start=1):
            if hasattr(value, "value"):
                value = value.value
            cell = ws.cell(row=row_idx, column=col_idx, value=value)
            cell.border = THIN_BORDER
            if isinstance(value, float):
                cell.number_format = "0.0000"

    ws.freeze_panes = "A2"


def save_report_to_excel(report: EvalReport, path: Path) -> None:
    """One sheet per table plus a Summary sheet."""
    wb = Workbook()
    ws = wb.active
    ws.title = "Summary"
    for row_idx, line in enumerate(summary_lines(report), start=1):
        ws.cell(row=row_idx, column=1, value=line).font = Font(bold=not line.startswith(" "))
    ws.column_dimensions["A"].width = 80

    det = report.detection
    if det is not None:
        _table(
            wb.create_sheet("Threshold Curve"),
            [("Theta", 14), ("Precision", 12), ("Recall", 12), ("F1", 12)],
            [(p.theta, p.precision, p.recall, p.f1) for p in det.threshold_curve],
        )
        # +/-inf thresholds are not valid cell values
        _table(
            wb.create_sheet("ROC"),
            [("Threshold", 14), ("FPR", 12), ("TPR", 12)],
            [(repr(p.threshold) if abs(p.threshold) == float("inf") else p.threshold, p.fpr, p.tpr)
             for p in det.roc.points],
        )

    diag = report.diagnosis
    if diag is not None:
        labels = [label.value for label in diag.labels]
        ws_cm = wb.create_sheet("Confusion Matrix")
        _table(
            ws_cm,
            [("True \\ Predicted", 20)] + [(label, 16) for label in labels],
            [[label] + row for label, row in zip(labels, diag.confusion_matrix)],
        )
        for i in range(len(labels)):
            ws_cm.cell(row=i + 2, column=i + 2).fill = DIAGONAL_FILL
        _table(
            wb.create_sheet("Per Class"),
            [("Label", 18), ("Support", 10), ("Accuracy", 12), ("Precision", 12), ("Recall", 12),
             ("F1", 12)],
            [(c.label, c.support, c.accuracy, c.precision, c.recall, c.f1) for c in diag.per_class],
        )
        rows: List[Tuple[Any, ...]] = []
        rmse = {(b.low_db, b.high_db): b for b in diag.rmse_by_snr_bin}
        for b in diag.accuracy_by_snr_bin:
            r = rmse.get((b.low_db, b.high_db))
            rows.append((b.low_db, b.high_db, b.count, b.accuracy,
                         r.rmse_index if r else None, r.rmse_m if r else None))
        _table(
            wb.create_sheet("By SNR"),
            [("Low dB", 10), ("High dB", 10), ("Count", 10), ("Accuracy", 12),
             ("RMSE (samples)", 16), ("RMSE (m)", 12)],
            rows,
        )

    wb.save(path)
