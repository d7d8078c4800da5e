"""CLI for otdr-guard."""

import json
import sys
from pathlib import Path
from typing import List, NoReturn, Optional

import typer
import yaml
from dotenv import load_dotenv
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from .config import (
    CONFIG_FILENAME,
    ENV_DATA,
    ENV_MODEL_DIR,
    ENV_REPORT_DIR,
    load_config,
    save_config,
)
from .errors import ConfigError, DataContractError, ModelFileError
from .models import DetectResult, EvalReport, RunConfig
from .parsers.report_csv import summary_lines
from .pipeline import (
    cmd_calibrate,
    cmd_detect,
    cmd_eval,
    cmd_generate,
    cmd_simulate,
    cmd_train_ae,
    cmd_train_diag,
)

app = typer.Typer(
    name="otdrguard",
    help="Detect, diagnose and localize fiber faults in OTDR traces",
    add_completion=False,
)
console = Console()
err_console = Console(stderr=True)

EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_IO = 4
EXIT_MODEL = 5

FORMATS = ("text", "csv", "json-lines")


def exit_code_for(error: Exception) -> int:
    if isinstance(error, ConfigError):
        return EXIT_CONFIG
    if isinstance(error, DataContractError):
        return EXIT_DATA
    if isinstance(error, ModelFileError):
        return EXIT_MODEL
    if isinstance(error, OSError):
        return EXIT_IO
    return EXIT_UNEXPECTED


def _abort(error: Exception) -> NoReturn:
    err_console.print(f"[red]Error: {error}[/red]")
    raise typer.Exit(exit_code_for(error))


def _load(config_path: Optional[Path], seed: Optional[int]) -> RunConfig:
    return load_config(config_path, seed)


def _check_format(fmt: str) -> None:
    if fmt not in FORMATS:
        raise ConfigError(f"unknown format '{fmt}' (choose from {', '.join(FORMATS)})")


ConfigOption = typer.Option(None, "--config", "-c", help=f"Path to {CONFIG_FILENAME}")
SeedOption = typer.Option(None, "--seed", "-s", help="Override the run seed")


@app.command()
def init(
    output: Path = typer.Option(
        Path(CONFIG_FILENAME),
        "--output", "-o",
        help="Config file to write"
    ),
    force: bool = typer.Option(False, "--force", "-f", help="Overwrite an existing file"),
):
    """Write a default configuration file."""
    if output.exists() and not force:
        err_console.print(f"[red]Error: {output} already exists (use --force)[/red]")
        raise typer.Exit(EXIT_IO)
    try:
        save_config(RunConfig(), output)
    except Exception as e:
        _abort(e)
    console.print(f"[green]✓ Created {output}[/green]")
    console.print("\n[yellow]Next steps:[/yellow]")
    console.print("1. Adjust simulation counts and model sizes in the config")
    console.print("2. Run 'otdrguard generate' to build a dataset")


@app.command()
def validate(
    config_path: Optional[Path] = ConfigOption,
    seed: Optional[int] = SeedOption,
):
    """Validate the configuration and print the resolved values."""
    try:
        config = _load(config_path, seed)
    except Exception as e:
        _abort(e)
    console.print(Panel(
        yaml.dump(config.model_dump(mode="json"), default_flow_style=False, sort_keys=False).rstrip(),
        title="Resolved Configuration",
    ))


@app.command()
def generate(
    config_path: Optional[Path] = ConfigOption,
    seed: Optional[int] = SeedOption,
    out: Path = typer.Option(
        Path("dataset.jsonl"),
        "--out", "-o",
        envvar=ENV_DATA,
        help="Dataset file to write (JSON lines)"
    ),
):
    """Generate a labeled, split synthetic dataset."""
    try:
        config = _load(config_path, seed)
        dataset, manifest = cmd_generate(config, out)
    except Exception as e:
        _abort(e)

    table = Table(title="Dataset")
    table.add_column("Label", style="bold")
    for split in dataset.split_counts:
        table.add_column(split, justify="right")
    for label in dataset.class_counts:
        row = [label]
        for split in dataset.split_counts:
            row.append(str(sum(
                1 for s in dataset.samples
                if s.label.value == label and s.split is not None and s.split.value == split
            )))
        table.add_row(*row)
    console.print(table)
    console.print(f"Manifest: {manifest}")


@app.command()
def simulate(
    events: Path = typer.Option(..., "--events", "-e", help="YAML file with 'events' (and optional 'fiber')"),
    snr: Optional[float] = typer.Option(None, "--snr", help="Add noise at this SNR in dB"),
    config_path: Optional[Path] = ConfigOption,
    seed: Optional[int] = SeedOption,
    out: Path = typer.Option(Path("trace.csv"), "--out", "-o", help="Trace CSV to write"),
):
    """Synthesize one full OTDR trace from an event list."""
    try:
        config = _load(config_path, seed)
        trace = cmd_simulate(events, config, out, snr)
    except Exception as e:
        _abort(e)
    console.print(Panel(
        f"Samples: {trace.num_samples}\n"
        f"Resolution: {trace.meters_per_sample:.4f} m/sample\n"
        f"Events: {len(trace.events)}\n"
        f"SNR: {'noiseless' if trace.snr_db is None else f'{trace.snr_db:g} dB'}",
        title="Trace",
    ))


def _model_out(out: Optional[Path], model_dir: Path, default_name: str) -> Path:
    return out if out is not None else model_dir / default_name


@app.command("train-ae")
def train_ae(
    data: Path = typer.Option(..., "--data", "-d", envvar=ENV_DATA, help="Dataset file"),
    config_path: Optional[Path] = ConfigOption,
    seed: Optional[int] = SeedOption,
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Model file to write"),
    model_dir: Path = typer.Option(
        Path("models"), "--model-dir", envvar=ENV_MODEL_DIR, help="Directory for model files"
    ),
):
    """Train the GRU autoencoder on normal sequences."""
    try:
        config = _load(config_path, seed)
        target = _model_out(out, model_dir, "ae.model.json")
        result = cmd_train_ae(data, config, target)
    except Exception as e:
        _abort(e)
    last = result.history[-1].train_loss if result.history else None
    console.print(Panel(
        f"Epochs: {result.epochs_run}\n"
        f"Best epoch: {result.best_epoch if result.best_epoch is not None else 'final'}\n"
        f"Final train loss: {'n/a' if last is None else f'{last:.6f}'}\n"
        f"Model: {target}",
        title="Autoencoder",
    ))


@app.command("train-diag")
def train_diag(
    data: Path = typer.Option(..., "--data", "-d", envvar=ENV_DATA, help="Dataset file"),
    config_path: Optional[Path] = ConfigOption,
    seed: Optional[int] = SeedOption,
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Model file to write"),
    model_dir: Path = typer.Option(
        Path("models"), "--model-dir", envvar=ENV_MODEL_DIR, help="Directory for model files"
    ),
):
    """Train the attention-BiGRU fault diagnoser on faulty sequences."""
    try:
        config = _load(config_path, seed)
        target = _model_out(out, model_dir, "diag.model.json")
        result = cmd_train_diag(data, config, target)
    except Exception as e:
        _abort(e)
    last = result.history[-1].train_loss if result.history else None
    console.print(Panel(
        f"Epochs: {result.epochs_run}\n"
        f"Best epoch: {result.best_epoch if result.best_epoch is not None else 'final'}\n"
        f"Final train loss: {'n/a' if last is None else f'{last:.6f}'}\n"
        f"Model: {target}",
        title="Diagnoser",
    ))


@app.command()
def calibrate(
    model: Path = typer.Option(..., "--model", "-m", help="Autoencoder model file"),
    data: Path = typer.Option(..., "--data", "-d", envvar=ENV_DATA, help="Dataset file"),
    config_path: Optional[Path] = ConfigOption,
    seed: Optional[int] = SeedOption,
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Write here instead of in place"),
):
    """Pick the F1-optimal anomaly threshold and store it in the model."""
    try:
        config = _load(config_path, seed)
        calibrated, sweep = cmd_calibrate(model, data, config, out)
    except Exception as e:
        _abort(e)
    best = next(p for p in sweep.curve if p.theta == sweep.theta)
    console.print(Panel(
        f"Theta: {sweep.theta!r}\n"
        f"Precision: {best.precision:.4f}\n"
        f"Recall: {best.recall:.4f}\n"
        f"F1: {best.f1:.4f}\n"
        f"Candidates: {len(sweep.curve)}",
        title="Calibration",
    ))


def _eval_records(report: EvalReport) -> List[dict]:
    records = []
    if report.detection is not None:
        records.append({"section": "detection", **report.detection.model_dump(mode="json")})
    if report.diagnosis is not None:
        records.append({"section": "diagnosis", **report.diagnosis.model_dump(mode="json")})
    return records


def _eval_csv_rows(report: EvalReport) -> List[str]:
    rows = ["metric,value"]
    if report.detection is not None:
        det = report.detection
        rows += [
            f"theta,{det.theta!r}",
            f"precision,{det.metrics.precision!r}",
            f"recall,{det.metrics.recall!r}",
            f"f1,{det.metrics.f1!r}",
            f"auc,{det.roc.auc!r}",
        ]
    if report.diagnosis is not None:
        diag = report.diagnosis
        rows += [
            f"accuracy,{diag.accuracy!r}",
            f"rmse_index,{diag.rmse_index!r}",
            f"rmse_m,{diag.rmse_m!r}",
        ]
        rows += [f"accuracy_{c.label.value},{c.accuracy!r}" for c in diag.per_class]
    return rows


@app.command("eval")
def evaluate(
    data: Path = typer.Option(..., "--data", "-d", envvar=ENV_DATA, help="Dataset file"),
    ae_model: Optional[Path] = typer.Option(None, "--ae-model", help="Calibrated autoencoder"),
    diag_model: Optional[Path] = typer.Option(None, "--diag-model", help="Diagnosis model"),
    config_path: Optional[Path] = ConfigOption,
    seed: Optional[int] = SeedOption,
    out: Path = typer.Option(
        Path("report"), "--out", "-o", envvar=ENV_REPORT_DIR, help="Report directory"
    ),
    fmt: str = typer.Option("text", "--format", "-f", help="text, csv or json-lines"),
    xlsx: bool = typer.Option(False, "--xlsx", help="Also write report.xlsx"),
):
    """Evaluate models on the test split and write report files."""
    try:
        _check_format(fmt)
        config = _load(config_path, seed)
        report = cmd_eval(data, config, out, ae_model, diag_model, xlsx)
    except Exception as e:
        _abort(e)

    if fmt == "json-lines":
        for record in _eval_records(report):
            typer.echo(json.dumps(record))
    elif fmt == "csv":
        typer.echo("\n".join(_eval_csv_rows(report)))
    else:
        console.print(Panel("\n".join(summary_lines(report)), title="Evaluation"))


def _detect_csv(results: List[DetectResult]) -> List[str]:
    rows = ["index,verdict,score,theta,snr_db,label,position_index,position_m"]
    for i, r in enumerate(results, start=1):
        cells = [
            str(i), r.verdict, repr(r.score), repr(r.theta), repr(r.snr_db),
            r.label.value if r.label else "",
            "" if r.position_index is None else str(r.position_index),
            "" if r.position_m is None else repr(r.position_m),
        ]
        rows.append(",".join(cells))
    return rows


def _detect_table(results: List[DetectResult]) -> None:
    table = Table(title="Detection")
    table.add_column("#", justify="right")
    table.add_column("Verdict", style="bold")
    table.add_column("Score", justify="right")
    table.add_column("SNR dB", justify="right")
    table.add_column("Fault")
    table.add_column("Index", justify="right")
    table.add_column("Meters", justify="right")
    for i, r in enumerate(results, start=1):
        style = "red" if r.verdict == "anomalous" else "green"
        table.add_row(
            str(i),
            f"[{style}]{r.verdict}[/{style}]",
            f"{r.score:.5f}",
            f"{r.snr_db:.1f}",
            r.label.value if r.label else "",
            "" if r.position_index is None else str(r.position_index),
            "" if r.position_m is None else f"{r.position_m:.3f}",
        )
    console.print(table)
    for i, r in enumerate(results, start=1):
        if r.attention is not None:
            weights = " ".join(f"{a:.3f}" for a in r.attention)
            console.print(f"[blue]#{i} attention:[/blue] {weights}")


@app.command()
def detect(
    ae_model: Path = typer.Option(..., "--ae-model", help="Calibrated autoencoder"),
    diag_model: Optional[Path] = typer.Option(None, "--diag-model", help="Diagnosis model"),
    input_file: Optional[Path] = typer.Option(
        None, "--input", "-i", help="File of dataset lines or raw 30-point lines ('-' for stdin)"
    ),
    points: Optional[str] = typer.Option(None, "--points", "-p", help="30 raw trace levels"),
    snr: Optional[float] = typer.Option(
        None, "--snr", help="Known trace SNR in dB for raw-point lines (default: estimated)"
    ),
    config_path: Optional[Path] = ConfigOption,
    seed: Optional[int] = SeedOption,
    fmt: str = typer.Option("text", "--format", "-f", help="text, csv or json-lines"),
):
    """Flag anomalous sequences and diagnose them."""
    try:
        _check_format(fmt)
        config = _load(config_path, seed)
        if (input_file is None) == (points is None):
            raise ConfigError("give exactly one of --input or --points")
        if points is not None:
            lines = [points]
        elif str(input_file) == "-":
            lines = sys.stdin.read().splitlines()
        else:
            lines = input_file.read_text(encoding="utf-8").splitlines()
        results = cmd_detect(ae_model, lines, config, diag_model, snr)
    except Exception as e:
        _abort(e)

    if fmt == "json-lines":
        for r in results:
            typer.echo(r.model_dump_json())
    elif fmt == "csv":
        typer.echo("\n".join(_detect_csv(results)))
    else:
        _detect_table(results)


def main():
    """Entry point for the CLI."""
    load_dotenv()
    app()


if __name__ == "__main__":
    main()
