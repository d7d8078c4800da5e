"""Training loops for the autoencoder and the diagnoser, plus threshold calibration."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from rich.console import Console

from .errors import DataContractError
from .metrics import sweep_threshold_scores
from .models import (
    AeArchitecture,
    Dataset,
    DiagArchitecture,
    EpochLog,
    SequenceSample,
    Split,
    ThresholdSweep,
    TrainConfig,
)
from .networks import (
    AeModel,
    DiagModel,
    anomaly_scores,
    build_batch,
    diag_targets,
    init_ae_model,
    init_diag_model,
    multitask_loss,
    reconstruction_loss,
)
from .nn.optim import Adam
from .nn.tensor import Tensor
from .seeding import substream

console = Console(stderr=True)

AnyModel = Union[AeModel, DiagModel]


@dataclass
class TrainingResult:
    """Trained model, one log entry per epoch run, and the epoch whose parameters were kept."""

    model: AnyModel
    history: List[EpochLog] = field(default_factory=list)
    best_epoch: Optional[int] = None

    @property
    def epochs_run(self) -> int:
        return len(self.history)


def _indexed_split(dataset: Dataset, split: Split) -> List[Tuple[int, SequenceSample]]:
    """Samples of ``split`` with their 1-based line numbers in the dataset file."""
    return [(i + 1, s) for i, s in enumerate(dataset.samples) if s.split == split]


def _snr_range(samples: Sequence[SequenceSample]) -> Tuple[float, float]:
    if not samples:
        return (0.0, 0.0)
    snrs = [s.snr_db for s in samples]
    return (float(min(snrs)), float(max(snrs)))


def _batches(count: int, batch_size: int, seed: int, epoch: int) -> List[np.ndarray]:
    order = substream(seed, "shuffle", epoch).permutation(count)
    return [order[start:start + batch_size] for start in range(0, count, batch_size)]


class EarlyStopping:
    """Tracks the best validation loss and keeps a copy of the parameters that achieved it."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best_loss = np.inf
        self.best_epoch: Optional[int] = None
        self.best_params: Optional[Dict[str, Tensor]] = None
        self.stale = 0

    def update(self, epoch: int, val_loss: float, params: Dict[str, Tensor]) -> bool:
        """Record an epoch; returns True when training should stop."""
        if val_loss < self.best_loss:
            self.best_loss = val_loss
            self.best_epoch = epoch
            self.best_params = {k: v.copy() for k, v in params.items()}
            self.stale = 0
            return False
        self.stale += 1
        return self.stale >= self.patience


def _fit(
    model: AnyModel,
    inputs: np.ndarray,
    step: Callable[[AnyModel, np.ndarray], Tuple[float, Dict[str, Tensor], Dict[str, float]]],
    val_loss: Optional[Callable[[AnyModel], float]],
    train: TrainConfig,
    seed: int,
    verbose: bool,
) -> TrainingResult:
    optimizer = Adam(train.learning_rate, train.beta1, train.beta2, train.epsilon)
    stopper = EarlyStopping(train.patience)
    params = model.params.tensors()
    history: List[EpochLog] = []
    count = inputs.shape[0]

    for epoch in range(1, train.epochs + 1):
        total = 0.0
        parts: Dict[str, float] = {}
        for idx in _batches(count, train.batch_size, seed, epoch):
            loss, grads, extra = step(model, idx)
            params = optimizer.step(params, grads)
            model.params = model.params.with_tensors(params)
            total += loss * len(idx)
            for name, value in extra.items():
                parts[name] = parts.get(name, 0.0) + value * len(idx)

        log = EpochLog(
            epoch=epoch,
            train_loss=total / count,
            val_loss=val_loss(model) if val_loss is not None else None,
            **{name: value / count for name, value in parts.items()},
        )
        history.append(log)
        if verbose:
            val = f" val {log.val_loss:.6f}" if log.val_loss is not None else ""
            console.print(f"[blue]epoch {epoch}/{train.epochs} train {log.train_loss:.6f}{val}[/blue]")

        if log.val_loss is not None and stopper.update(epoch, log.val_loss, params):
            if verbose:
                console.print(f"[yellow]Early stop: no improvement for {train.patience} epochs[/yellow]")
            break

    if stopper.best_params is not None:
        model.params = model.params.with_tensors(stopper.best_params)
    return TrainingResult(model=model, history=history, best_epoch=stopper.best_epoch)


def train_ae(
    dataset: Dataset,
    train: TrainConfig,
    architecture: Optional[AeArchitecture] = None,
    seed: Optional[int] = None,
    verbose: bool = False,
) -> TrainingResult:
    """Train the autoencoder on the normal-only training split.

    Validation loss is the reconstruction loss on normal validation sequences;
    without any, every epoch runs and the final parameters are kept.
    """
    architecture = architecture or AeArchitecture()
    seed = train.seed if train.seed is not None else (dataset.seed if seed is None else seed)

    indexed = _indexed_split(dataset, Split.TRAIN)
    for line, sample in indexed:
        if sample.is_faulty:
            raise DataContractError(
                f"autoencoder training split must be normal-only, found '{sample.label.value}'", line
            )
    if not indexed:
        raise DataContractError("training split is empty")
    samples = [s for _, s in indexed]
    inputs = build_batch(samples)
    val_normals = [s for s in dataset.split(Split.VAL) if not s.is_faulty]
    val_inputs = build_batch(val_normals) if val_normals else None

    def step(model: AeModel, idx: np.ndarray):
        loss, grads = reconstruction_loss(model, inputs[idx])
        return loss, grads.tensors(), {}

    def val_loss(model: AeModel) -> float:
        return reconstruction_loss(model, val_inputs)[0]

    model = init_ae_model(architecture, seed)
    if verbose:
        console.print(f"[blue]Training autoencoder on {len(samples)} normal sequences...[/blue]")
    result = _fit(model, inputs, step, val_loss if val_inputs is not None else None, train, seed,
                  verbose)
    model.metadata = model.metadata.model_copy(update={
        "seed": seed,
        "config_hash": dataset.config_hash,
        "snr_range_db": _snr_range(samples),
        "epochs_trained": result.epochs_run,
    })
    if verbose:
        console.print(f"[green]✓ Autoencoder trained for {result.epochs_run} epochs[/green]")
    return result


def train_diag(
    dataset: Dataset,
    train: TrainConfig,
    architecture: Optional[DiagArchitecture] = None,
    seed: Optional[int] = None,
    verbose: bool = False,
) -> TrainingResult:
    """Train the diagnoser on faulty sequences with the weighted multi-task loss."""
    architecture = architecture or DiagArchitecture()
    seed = train.seed if train.seed is not None else (dataset.seed if seed is None else seed)

    for line, sample in enumerate(dataset.samples, start=1):
        if not sample.is_faulty:
            raise DataContractError("diagnosis datasets take faulty sequences only", line)
    samples = dataset.split(Split.TRAIN)
    if not samples:
        raise DataContractError("training split is empty")
    inputs = build_batch(samples)
    classes, positions = diag_targets(samples)
    val_samples = dataset.split(Split.VAL)
    val_inputs = build_batch(val_samples) if val_samples else None
    val_classes, val_positions = diag_targets(val_samples) if val_samples else (None, None)

    def step(model: DiagModel, idx: np.ndarray):
        out = multitask_loss(
            model, inputs[idx], classes[idx], positions[idx], train.lambda1, train.lambda2
        )
        parts = {"classification_loss": out.classification, "position_loss": out.position}
        return out.total, out.grads.tensors(), parts

    def val_loss(model: DiagModel) -> float:
        return multitask_loss(
            model, val_inputs, val_classes, val_positions, train.lambda1, train.lambda2
        ).total

    model = init_diag_model(architecture, seed)
    if verbose:
        console.print(f"[blue]Training diagnoser on {len(samples)} faulty sequences...[/blue]")
    result = _fit(model, inputs, step, val_loss if val_inputs is not None else None, train, seed,
                  verbose)
    model.metadata = model.metadata.model_copy(update={
        "seed": seed,
        "config_hash": dataset.config_hash,
        "snr_range_db": _snr_range(samples),
        "lambda1": train.lambda1,
        "lambda2": train.lambda2,
        "epochs_trained": result.epochs_run,
    })
    if verbose:
        console.print(f"[green]✓ Diagnoser trained for {result.epochs_run} epochs[/green]")
    return result


def sweep_threshold(model: AeModel, samples: Sequence[SequenceSample]) -> ThresholdSweep:
    """F1-maximizing anomaly threshold on labeled validation samples."""
    scores = anomaly_scores(model, samples)
    return sweep_threshold_scores(scores, [s.is_faulty for s in samples])


def calibrate(model: AeModel, samples: Sequence[SequenceSample]) -> Tuple[AeModel, ThresholdSweep]:
    """Copy of ``model`` with the swept threshold stored in its metadata."""
    sweep = sweep_threshold(model, samples)
    metadata = model.metadata.model_copy(update={"theta": sweep.theta})
    return AeModel(model.architecture, model.params.copy(), metadata), sweep
