"""Command implementations: generate, train, calibrate, evaluate, detect and simulate."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
import yaml
from pydantic import ValidationError
from rich.console import Console

from .config import resolved_config_path, save_config
from .errors import ConfigError, DataContractError, ModelFileError
from .metrics import evaluate_detection, evaluate_diag
from .models import (
    FAULT_CLASSES,
    SEQUENCE_LENGTH,
    SNR_CEILING_DB,
    Dataset,
    DetectResult,
    EvalReport,
    EventSpec,
    FaultLabel,
    FiberSpec,
    RunConfig,
    SequenceSample,
    Split,
    ThresholdSweep,
)
from .networks import (
    AeModel,
    DiagModel,
    Verdict,
    anomaly_score,
    build_input,
    classify_scores,
    diag_forward,
)
from .parsers.dataset_io import load_dataset, parse_sample_line, save_dataset
from .parsers.model_file import load_model, save_model
from .parsers.report_csv import emit_report, write_loss_history, write_rows, write_threshold_curve
from .parsers.report_excel import save_report_to_excel
from .seeding import substream
from .simulation import (
    OtdrTrace,
    add_noise_for_snr,
    compute_snr,
    generate_dataset,
    normalize_window,
    synthesize_trace,
)
from .training import TrainingResult, calibrate, train_ae, train_diag

console = Console(stderr=True)


def _sidecar(path: Path, suffix: str) -> Path:
    return path.with_name(f"{path.stem}.{suffix}")


def cmd_generate(config: RunConfig, out_path: Path) -> Tuple[Dataset, Path]:
    """Generate a dataset; writes the JSONL file, its manifest and the resolved config."""
    sim = config.simulation
    console.print(
        f"[blue]Generating {sim.mode.value} dataset "
        f"({sim.normal_count} normal, {sim.faulty_count} faulty, seed {config.seed})...[/blue]"
    )
    dataset = generate_dataset(sim, config.seed)
    manifest = save_dataset(dataset, out_path)
    save_config(config, resolved_config_path(out_path))
    console.print(f"[green]✓ Saved {len(dataset.samples)} sequences to {out_path}[/green]")
    return dataset, manifest


def _save_training(result: TrainingResult, config: RunConfig, out_model: Path) -> None:
    save_model(result.model, out_model)
    write_loss_history(result.history, _sidecar(out_model, "loss.csv"))
    save_config(config, resolved_config_path(out_model))
    console.print(f"[green]✓ Saved model to {out_model}[/green]")


def cmd_train_ae(dataset_path: Path, config: RunConfig, out_model: Path) -> TrainingResult:
    dataset = load_dataset(dataset_path)
    result = train_ae(dataset, config.train_ae, config.ae_model, config.seed, verbose=True)
    _save_training(result, config, out_model)
    return result


def cmd_train_diag(dataset_path: Path, config: RunConfig, out_model: Path) -> TrainingResult:
    dataset = load_dataset(dataset_path)
    result = train_diag(dataset, config.train_diag, config.diag_model, config.seed, verbose=True)
    _save_training(result, config, out_model)
    return result


def load_ae_model(path: Path) -> AeModel:
    model = load_model(path)
    if not isinstance(model, AeModel):
        raise ModelFileError(f"{path}: expected an autoencoder model, found '{model.kind}'")
    return model


def load_diag_model(path: Path) -> DiagModel:
    model = load_model(path)
    if not isinstance(model, DiagModel):
        raise ModelFileError(f"{path}: expected a diagnosis model, found '{model.kind}'")
    return model


def calibration_samples(dataset: Dataset) -> List[SequenceSample]:
    """Validation split, or the test split when there is no validation data."""
    samples = dataset.split(Split.VAL)
    if not samples:
        console.print("[yellow]Validation split is empty; calibrating on the test split[/yellow]")
        samples = dataset.split(Split.TEST)
    return samples


def cmd_calibrate(
    model_path: Path,
    dataset_path: Path,
    config: RunConfig,
    out_model: Optional[Path] = None,
) -> Tuple[AeModel, ThresholdSweep]:
    """Store the F1-optimal threshold in the model; writes the threshold curve and resolved config."""
    out_model = out_model or model_path
    model = load_ae_model(model_path)
    dataset = load_dataset(dataset_path)
    calibrated, sweep = calibrate(model, calibration_samples(dataset))
    save_model(calibrated, out_model)
    write_threshold_curve(sweep.curve, _sidecar(out_model, "threshold_curve.csv"))
    save_config(config, resolved_config_path(out_model))
    console.print(f"[green]✓ Calibrated theta = {sweep.theta!r} (F1 {sweep.f1:.4f})[/green]")
    return calibrated, sweep


def cmd_eval(
    dataset_path: Path,
    config: RunConfig,
    out_dir: Path,
    ae_model_path: Optional[Path] = None,
    diag_model_path: Optional[Path] = None,
    xlsx: bool = False,
) -> EvalReport:
    """Evaluate one or both models on the test split and write the report files."""
    if ae_model_path is None and diag_model_path is None:
        raise ConfigError("eval needs --ae-model and/or --diag-model")
    dataset = load_dataset(dataset_path)
    test = dataset.split(Split.TEST)
    if not test:
        raise DataContractError(f"{dataset_path}: test split is empty")

    report = EvalReport()
    if ae_model_path is not None:
        model = load_ae_model(ae_model_path)
        if model.metadata.theta is None:
            raise ModelFileError(f"{ae_model_path}: no threshold stored; run 'otdrguard calibrate' first")
        report.detection = evaluate_detection(model, test, evaluation=config.evaluation)
    if diag_model_path is not None:
        faulty = [s for s in test if s.is_faulty]
        report.diagnosis = evaluate_diag(
            load_diag_model(diag_model_path),
            faulty,
            config.simulation.fiber.meters_per_sample,
            config.evaluation,
        )

    emit_report(report, out_dir)
    if xlsx:
        save_report_to_excel(report, out_dir / "report.xlsx")
    save_config(config, resolved_config_path(out_dir / "report"))
    console.print(f"[green]✓ Wrote report to {out_dir}[/green]")
    return report


# --------------------------------------------------------------------------- detection

_SEPARATORS = re.compile(r"[\s,;]+")


def parse_raw_points(
    text: str, line_number: Optional[int] = None, snr_db: Optional[float] = None
) -> SequenceSample:
    """30 raw trace levels (JSON list, or comma/whitespace separated) as a normalized sample.

    The 31st input is ``snr_db`` when the trace SNR is known. Otherwise it is the
    detrended estimate of :func:`compute_snr`, which reads low on windows holding a
    step or spike; generated training samples carry the exact simulated SNR.
    """
    text = text.strip()
    try:
        if text.startswith("["):
            values = [float(v) for v in json.loads(text)]
        else:
            values = [float(v) for v in _SEPARATORS.split(text) if v]
    except (ValueError, TypeError) as e:
        raise DataContractError(f"cannot read trace points ({e})", line_number) from e
    if len(values) != SEQUENCE_LENGTH:
        raise DataContractError(f"expected {SEQUENCE_LENGTH} points, got {len(values)}", line_number)
    raw = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(raw)):
        raise DataContractError("trace points must be finite", line_number)
    return SequenceSample(
        points=normalize_window(raw).tolist(),
        snr_db=compute_snr(raw) if snr_db is None else snr_db,
        label=FaultLabel.NORMAL,
    )


def parse_detect_input(
    text: str, line_number: Optional[int] = None, snr_db: Optional[float] = None
) -> SequenceSample:
    """A dataset line (JSON object) or raw trace points."""
    if text.lstrip().startswith("{"):
        return parse_sample_line(text, line_number)
    return parse_raw_points(text, line_number, snr_db)


def read_detect_inputs(lines: Sequence[str], snr_db: Optional[float] = None) -> List[SequenceSample]:
    """Parse every non-blank line before any is scored."""
    if snr_db is not None and not 0.0 <= snr_db <= SNR_CEILING_DB:
        raise ConfigError(f"--snr must lie in [0, {SNR_CEILING_DB:g}] dB")
    return [
        parse_detect_input(line, number, snr_db)
        for number, line in enumerate(lines, start=1)
        if line.strip()
    ]


def detect_sequence(
    ae: AeModel, sample: SequenceSample, diag: Optional[DiagModel] = None, meters_per_sample: float = 0.0
) -> DetectResult:
    """Score with the autoencoder; anomalous sequences go on to the diagnoser when one is given."""
    theta = ae.metadata.theta
    if theta is None:
        raise ModelFileError("autoencoder has no threshold; run 'otdrguard calibrate' first")
    score = anomaly_score(ae, sample)
    anomalous = bool(classify_scores([score], theta)[0])
    result = DetectResult(
        verdict=(Verdict.ANOMALOUS if anomalous else Verdict.NORMAL).value,
        score=score,
        theta=theta,
        snr_db=sample.snr_db,
    )
    if anomalous and diag is not None:
        out = diag_forward(diag, build_input(sample))
        index = out.predicted_index
        result.label = out.predicted_class
        result.class_probs = {
            label.value: float(p) for label, p in zip(FAULT_CLASSES, out.class_probs)
        }
        result.position_index = index
        result.position_m = index * meters_per_sample
        result.attention = [float(a) for a in out.alphas]
    return result


def cmd_detect(
    ae_model_path: Path,
    lines: Sequence[str],
    config: RunConfig,
    diag_model_path: Optional[Path] = None,
    snr_db: Optional[float] = None,
) -> List[DetectResult]:
    ae = load_ae_model(ae_model_path)
    diag = load_diag_model(diag_model_path) if diag_model_path is not None else None
    samples = read_detect_inputs(lines, snr_db)
    if not samples:
        raise DataContractError("no input sequences")
    mps = config.simulation.fiber.meters_per_sample
    return [detect_sequence(ae, s, diag, mps) for s in samples]


# --------------------------------------------------------------------------- single traces


@dataclass
class TraceRequest:
    fiber: FiberSpec
    events: List[EventSpec]


def load_trace_request(path: Path, default_fiber: FiberSpec) -> TraceRequest:
    """YAML file with an ``events`` list and an optional ``fiber`` mapping."""
    with open(path, "r", encoding="utf-8") as f:
        try:
            data = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"{path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    unknown = set(data) - {"fiber", "events"}
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    try:
        fiber = FiberSpec(**data["fiber"]) if data.get("fiber") else default_fiber
        events = sorted(
            (EventSpec(**e) for e in data.get("events") or []), key=lambda e: e.position_m
        )
    except (TypeError, ValidationError) as e:
        raise ConfigError(f"{path}: {e}") from e
    return TraceRequest(fiber, events)


def simulate_trace(
    request: TraceRequest, snr_db: Optional[float] = None, seed: int = 0
) -> OtdrTrace:
    try:
        trace = synthesize_trace(request.fiber, request.events)
        if snr_db is not None:
            trace = add_noise_for_snr(trace, snr_db, substream(seed, "dataset"))
    except ValueError as e:
        raise ConfigError(str(e)) from e
    return trace


def cmd_simulate(
    events_path: Path, config: RunConfig, out_path: Path, snr_db: Optional[float] = None
) -> OtdrTrace:
    """Write one synthesized trace as ``index,distance_m,noiseless_db,samples_db`` rows."""
    request = load_trace_request(events_path, config.simulation.fiber)
    trace = simulate_trace(request, snr_db, config.seed)
    write_rows(
        out_path,
        ("index", "distance_m", "noiseless_db", "samples_db"),
        (
            (i, float(d), float(clean), float(noisy))
            for i, (d, clean, noisy) in enumerate(
                zip(trace.distances_m, trace.noiseless_db, trace.samples_db)
            )
        ),
    )
    save_config(config, resolved_config_path(out_path))
    console.print(f"[green]✓ Saved {trace.num_samples}-sample trace to {out_path}[/green]")
    return trace
