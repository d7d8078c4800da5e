"""Tests for parsers."""

import csv
import json
from pathlib import Path
import tempfile

import pytest
from openpyxl import load_workbook

from otdr_guard.errors import DataContractError
from otdr_guard.metrics import detection_report, diagnosis_report
from otdr_guard.models import Dataset, DatasetMode, EvalReport, FaultLabel, SequenceSample, Split
from otdr_guard.parsers.dataset_io import (
    load_dataset,
    manifest_path,
    parse_sample_line,
    sample_to_line,
    save_dataset,
)
from otdr_guard.parsers.report_csv import emit_report, summary_lines
from otdr_guard.parsers.report_excel import save_report_to_excel


def make_dataset():
    return Dataset(
        mode=DatasetMode.DIAG,
        seed=3,
        config_hash="f" * 64,
        samples=[
            SequenceSample(points=[0.25] * 30, snr_db=12.5, label=FaultLabel.FIBER_CUT,
                           position_index=7, split=Split.TRAIN),
            SequenceSample(points=[1.0] * 30, snr_db=3.0, label=FaultLabel.BAD_SPLICE,
                           position_index=0, split=Split.TEST),
        ],
    )


def make_report():
    detection = detection_report(
        [0.1, 0.2, 0.5, 0.6], [False, False, True, True], [2.0, 7.0, 12.0, 31.0], theta=0.35
    )
    diagnosis = diagnosis_report(
        [0, 1, 2, 3, 0], [0, 1, 3, 3, 1], [5, 6, 7, 8, 9], [5, 7, 7, 8, 6],
        [1.0, 6.0, 11.0, 16.0, 29.0], 0.1021,
    )
    return EvalReport(detection=detection, diagnosis=diagnosis)


class TestDatasetIO:
    """Tests for JSON-lines datasets."""

    def test_roundtrip(self):
        """Samples and manifest fields survive save/load."""
        dataset = make_dataset()
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "data" / "diag.jsonl"
            manifest = save_dataset(dataset, path)
            assert manifest == Path(tmp) / "data" / "diag.manifest.json"
            loaded = load_dataset(path)
            data = json.loads(manifest.read_text())
        assert loaded.samples == dataset.samples
        assert loaded.seed == 3 and loaded.config_hash == dataset.config_hash
        assert data["count"] == 2
        assert data["class_counts"] == {"fiber_cut": 1, "bad_splice": 1}

    def test_line_format(self):
        """Keys appear in a fixed order on one compact line."""
        line = sample_to_line(make_dataset().samples[0])
        assert line.startswith('{"points":[0.25,')
        assert list(json.loads(line)) == ["points", "snr_db", "label", "position_index", "split"]

    def test_bad_json_names_line(self):
        """Malformed lines are reported with their number."""
        with pytest.raises(DataContractError, match="line 4"):
            parse_sample_line("{not json", 4)

    def test_unknown_field(self):
        """Extra keys are refused."""
        data = json.loads(sample_to_line(make_dataset().samples[0]))
        data["comment"] = "x"
        with pytest.raises(DataContractError, match="comment"):
            parse_sample_line(json.dumps(data), 1)

    def test_invalid_sample(self):
        """A fault without a position fails validation with its line."""
        data = json.loads(sample_to_line(make_dataset().samples[0]))
        data["position_index"] = None
        with pytest.raises(DataContractError) as excinfo:
            parse_sample_line(json.dumps(data), 9)
        assert excinfo.value.line == 9

    def test_error_line_in_file(self):
        """Line numbers count from 1 in the file."""
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "x.jsonl"
            good = sample_to_line(make_dataset().samples[0])
            path.write_text(f"{good}\n{good}\n[1, 2]\n")
            with pytest.raises(DataContractError) as excinfo:
                load_dataset(path)
        assert excinfo.value.line == 3

    def test_manifest_count_mismatch(self):
        """A truncated file no longer matches its manifest."""
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "diag.jsonl"
            save_dataset(make_dataset(), path)
            path.write_text(path.read_text().splitlines()[0] + "\n")
            with pytest.raises(DataContractError, match="manifest"):
                load_dataset(path)

    def test_without_manifest(self):
        """Without a manifest the mode follows the labels."""
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "diag.jsonl"
            save_dataset(make_dataset(), path)
            manifest_path(path).unlink()
            assert load_dataset(path).mode == DatasetMode.DIAG


class TestReportCsv:
    """Tests for CSV reports."""

    def test_files(self):
        """Every table plus the summary is written."""
        with tempfile.TemporaryDirectory() as tmp:
            written = emit_report(make_report(), Path(tmp))
            names = sorted(p.name for p in written)
        assert names == sorted([
            "threshold_curve.csv", "roc.csv", "detection_accuracy_by_snr.csv",
            "confusion_matrix.csv", "per_class.csv", "diagnosis_accuracy_by_snr.csv",
            "rmse_by_snr.csv", "summary.txt",
        ])

    def test_identical_reports_identical_bytes(self):
        """Emitting the same report twice gives the same files."""
        report = make_report()
        with tempfile.TemporaryDirectory() as tmp:
            a = emit_report(report, Path(tmp) / "a")
            b = emit_report(report, Path(tmp) / "b")
            for x, y in zip(a, b):
                assert x.read_bytes() == y.read_bytes()

    def test_confusion_rows(self):
        """Confusion rows sum to the class supports."""
        with tempfile.TemporaryDirectory() as tmp:
            emit_report(make_report(), Path(tmp))
            with open(Path(tmp) / "confusion_matrix.csv", newline="") as f:
                rows = list(csv.reader(f))
        assert rows[0] == ["true_label", "fiber_cut", "fiber_tapping", "bad_splice", "dirty_connector"]
        assert [sum(int(v) for v in row[1:]) for row in rows[1:]] == [2, 1, 1, 1]

    def test_roc_endpoints(self):
        """The ROC file starts at +inf and ends at -inf."""
        with tempfile.TemporaryDirectory() as tmp:
            emit_report(make_report(), Path(tmp))
            lines = (Path(tmp) / "roc.csv").read_text().splitlines()
        assert lines[0] == "threshold,fpr,tpr"
        assert lines[1] == "inf,0.0,0.0"
        assert lines[-1] == "-inf,1.0,1.0"

    def test_summary(self):
        """The summary names both sections."""
        lines = summary_lines(make_report())
        assert "Anomaly detection" in lines
        assert "Fault diagnosis" in lines
        assert any("confused bad_splice -> dirty_connector: 1" in line for line in lines)


class TestReportExcel:
    """Tests for the Excel report."""

    def test_sheets(self):
        """One sheet per table."""
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "report.xlsx"
            save_report_to_excel(make_report(), path)
            assert load_workbook(path, read_only=True).sheetnames == [
                "Summary", "Threshold Curve", "ROC", "Confusion Matrix", "Per Class", "By SNR"
            ]

    def test_detection_only(self):
        """Diagnosis sheets are left out without a diagnosis report."""
        report = make_report().model_copy(update={"diagnosis": None})
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "report.xlsx"
            save_report_to_excel(report, path)
            assert load_workbook(path, read_only=True).sheetnames == ["Summary", "Threshold Curve", "ROC"]
