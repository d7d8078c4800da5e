"""Pydantic models for otdr-guard."""

from __future__ import annotations

from collections import Counter
from enum import Enum
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, computed_field, field_validator, model_validator

SEQUENCE_LENGTH = 30
INPUT_STEPS = SEQUENCE_LENGTH + 1
SNR_CEILING_DB = 40.0
SPEED_OF_LIGHT_M_PER_S = 2.998e8


class StrictModel(BaseModel):
    """Base for configuration records: unknown keys are rejected."""
    model_config = ConfigDict(extra="forbid")


class FaultLabel(str, Enum):
    """Sequence label."""
    NORMAL = "normal"
    FIBER_CUT = "fiber_cut"
    FIBER_TAPPING = "fiber_tapping"
    BAD_SPLICE = "bad_splice"
    DIRTY_CONNECTOR = "dirty_connector"


# Class order of the diagnosis head and the confusion matrix.
FAULT_CLASSES: Tuple[FaultLabel, ...] = (
    FaultLabel.FIBER_CUT,
    FaultLabel.FIBER_TAPPING,
    FaultLabel.BAD_SPLICE,
    FaultLabel.DIRTY_CONNECTOR,
)


class EventKind(str, Enum):
    """Event placed along a simulated fiber."""
    CONNECTOR_REFLECTIVE = "connector_reflective"
    REFLECTOR = "reflector"
    SPLICE_LOSS = "splice_loss"
    BEND_TAP = "bend_tap"
    FIBER_CUT = "fiber_cut"
    DIRTY_CONNECTOR = "dirty_connector"

    @property
    def reflective(self) -> bool:
        return self in (
            EventKind.CONNECTOR_REFLECTIVE,
            EventKind.REFLECTOR,
            EventKind.FIBER_CUT,
            EventKind.DIRTY_CONNECTOR,
        )

    @property
    def label(self) -> FaultLabel:
        """Sequence label carried by a window containing this event."""
        return EVENT_LABELS.get(self, FaultLabel.NORMAL)


EVENT_LABELS: Dict[EventKind, FaultLabel] = {
    EventKind.FIBER_CUT: FaultLabel.FIBER_CUT,
    EventKind.BEND_TAP: FaultLabel.FIBER_TAPPING,
    EventKind.SPLICE_LOSS: FaultLabel.BAD_SPLICE,
    EventKind.DIRTY_CONNECTOR: FaultLabel.DIRTY_CONNECTOR,
}
LABEL_EVENTS: Dict[FaultLabel, EventKind] = {label: kind for kind, label in EVENT_LABELS.items()}


class Split(str, Enum):
    TRAIN = "train"
    VAL = "val"
    TEST = "test"


class DatasetMode(str, Enum):
    """``ae``: normal-only training split; ``diag``: faulty sequences only."""
    AE = "ae"
    DIAG = "diag"


class FiberSpec(StrictModel):
    """Fiber link measured by the OTDR."""

    length_km: float = 5.0
    attenuation_db_per_km: float = 0.2
    launch_level_db: float = 0.0
    sample_interval_ns: float = 1.0
    group_index: float = 1.468
    pulse_width_ns: float = 10.0

    @field_validator("length_km", "attenuation_db_per_km", "sample_interval_ns", "group_index",
                     "pulse_width_ns")
    @classmethod
    def positive(cls, v: float) -> float:
        if v <= 0:
            raise ValueError("must be positive")
        return v

    @property
    def meters_per_sample(self) -> float:
        """Two-way distance resolution of one sample."""
        return SPEED_OF_LIGHT_M_PER_S * self.sample_interval_ns * 1e-9 / (2.0 * self.group_index)

    @property
    def num_samples(self) -> int:
        return int(self.length_km * 1000.0 // self.meters_per_sample)


class EventSpec(StrictModel):
    """A normal event or fault at a position along the fiber."""

    kind: EventKind
    position_m: float = Field(ge=0.0)
    loss_db: float = Field(default=0.0, ge=0.0)
    reflectance_db: Optional[float] = Field(default=None, ge=0.0)
    ramp_samples: Optional[int] = Field(default=None, ge=1)

    @model_validator(mode="after")
    def kind_specific_fields(self) -> EventSpec:
        if self.reflectance_db is not None and not self.kind.reflective:
            raise ValueError(f"{self.kind.value} events are not reflective")
        if self.kind == EventKind.BEND_TAP and self.ramp_samples is None:
            self.ramp_samples = 1
        if self.kind != EventKind.BEND_TAP and self.ramp_samples is not None:
            raise ValueError("ramp_samples applies to bend_tap events only")
        return self


class SequenceSample(BaseModel):
    """One normalized 30-point window with its SNR, label and fault position."""

    points: List[float]
    snr_db: float
    label: FaultLabel
    position_index: Optional[int] = None
    split: Optional[Split] = None

    @field_validator("points")
    @classmethod
    def normalized_window(cls, v: List[float]) -> List[float]:
        if len(v) != SEQUENCE_LENGTH:
            raise ValueError(f"expected {SEQUENCE_LENGTH} points, got {len(v)}")
        if any(not (0.0 <= p <= 1.0) for p in v):
            raise ValueError("points must lie in [0, 1]")
        return v

    @model_validator(mode="after")
    def position_matches_label(self) -> SequenceSample:
        if self.label == FaultLabel.NORMAL:
            if self.position_index is not None:
                raise ValueError("normal sequences carry no fault position")
        else:
            if self.position_index is None:
                raise ValueError(f"{self.label.value} sequence needs a position_index")
            if not 0 <= self.position_index < SEQUENCE_LENGTH:
                raise ValueError(f"position_index must lie in [0, {SEQUENCE_LENGTH - 1}]")
        return self

    @property
    def is_faulty(self) -> bool:
        return self.label != FaultLabel.NORMAL


class Dataset(BaseModel):
    """Generated sequences with their split assignments."""

    mode: DatasetMode
    seed: int
    config_hash: str = ""
    samples: List[SequenceSample] = Field(default_factory=list)

    @computed_field
    @property
    def class_counts(self) -> Dict[str, int]:
        counts = Counter(s.label.value for s in self.samples)
        return {label.value: counts[label.value] for label in FaultLabel if counts[label.value]}

    @computed_field
    @property
    def split_counts(self) -> Dict[str, int]:
        counts = Counter(s.split.value for s in self.samples if s.split is not None)
        return {split.value: counts[split.value] for split in Split}

    def split(self, name: Split) -> List[SequenceSample]:
        return [s for s in self.samples if s.split == name]


# --------------------------------------------------------------------------- configuration


class SplitFractions(StrictModel):
    train: float = Field(ge=0.0, le=1.0)
    val: float = Field(ge=0.0, le=1.0)
    test: float = Field(ge=0.0, le=1.0)

    @model_validator(mode="after")
    def sums_to_one(self) -> SplitFractions:
        if abs(self.train + self.val + self.test - 1.0) > 1e-9:
            raise ValueError("split fractions must sum to 1")
        return self


DEFAULT_SPLITS: Dict[DatasetMode, SplitFractions] = {
    DatasetMode.AE: SplitFractions(train=0.7, val=0.0, test=0.3),
    DatasetMode.DIAG: SplitFractions(train=0.6, val=0.2, test=0.2),
}


class EventRanges(StrictModel):
    """Uniform draw ranges for event severities."""

    splice_loss_db: Tuple[float, float] = (0.3, 1.5)
    tap_loss_db: Tuple[float, float] = (0.05, 1.0)
    tap_ramp_samples: Tuple[int, int] = (2, 4)
    dirty_reflectance_db: Tuple[float, float] = (1.0, 4.0)
    dirty_loss_db: Tuple[float, float] = (0.5, 2.0)
    cut_reflectance_db: Tuple[float, float] = (2.0, 6.0)
    connector_reflectance_db: Tuple[float, float] = (0.5, 2.0)
    connector_loss_db: Tuple[float, float] = (0.0, 0.1)
    reflector_reflectance_db: Tuple[float, float] = (2.0, 6.0)

    @model_validator(mode="after")
    def ordered(self) -> EventRanges:
        for name in type(self).model_fields:
            low, high = getattr(self, name)
            if low > high or low < 0:
                raise ValueError(f"{name}: expected 0 <= low <= high")
        return self


class SimulationConfig(StrictModel):
    """Dataset generation parameters."""

    mode: DatasetMode = DatasetMode.DIAG
    normal_count: int = Field(default=0, ge=0)
    faulty_count: int = Field(default=1000, ge=0)
    classes: List[FaultLabel] = Field(default_factory=lambda: list(FAULT_CLASSES))
    snr_min_db: float = Field(default=0.0, ge=0.0, le=SNR_CEILING_DB)
    snr_max_db: float = Field(default=30.0, ge=0.0, le=SNR_CEILING_DB)
    split_fractions: Optional[SplitFractions] = None
    normal_event_fraction: float = Field(default=0.2, ge=0.0, le=1.0)
    cut_reflection_probability: float = Field(default=1.0, ge=0.0, le=1.0)
    position_margin: int = Field(default=2, ge=0, le=SEQUENCE_LENGTH // 2 - 1)
    fiber: FiberSpec = Field(default_factory=FiberSpec)
    events: EventRanges = Field(default_factory=EventRanges)

    @field_validator("classes")
    @classmethod
    def fault_classes_only(cls, v: List[FaultLabel]) -> List[FaultLabel]:
        if not v:
            raise ValueError("at least one fault class is required")
        if FaultLabel.NORMAL in v:
            raise ValueError("'normal' is not a fault class")
        if len(set(v)) != len(v):
            raise ValueError("fault classes must be unique")
        return v

    @model_validator(mode="after")
    def snr_range(self) -> SimulationConfig:
        if self.snr_min_db > self.snr_max_db:
            raise ValueError("snr_min_db must not exceed snr_max_db")
        return self

    @property
    def fractions(self) -> SplitFractions:
        return self.split_fractions or DEFAULT_SPLITS[self.mode]


class AeArchitecture(StrictModel):
    """GRU autoencoder sizes; the decoder mirrors the encoder."""
    hidden_sizes: Tuple[int, int] = (64, 32)

    @field_validator("hidden_sizes")
    @classmethod
    def positive_sizes(cls, v: Tuple[int, int]) -> Tuple[int, int]:
        if min(v) < 1:
            raise ValueError("hidden sizes must be positive")
        return v


class DiagArchitecture(StrictModel):
    """Attention-BiGRU sizes."""
    hidden_sizes: Tuple[int, int] = (64, 32)
    attention_size: int = Field(default=32, ge=1)

    @field_validator("hidden_sizes")
    @classmethod
    def positive_sizes(cls, v: Tuple[int, int]) -> Tuple[int, int]:
        if min(v) < 1:
            raise ValueError("hidden sizes must be positive")
        return v


class TrainConfig(StrictModel):
    """Optimisation settings for one training run."""

    epochs: int = Field(default=100, ge=0)
    batch_size: int = Field(default=64, ge=1)
    learning_rate: float = Field(default=1e-3, gt=0.0)
    beta1: float = Field(default=0.9, gt=0.0, lt=1.0)
    beta2: float = Field(default=0.999, gt=0.0, lt=1.0)
    epsilon: float = Field(default=1e-8, gt=0.0)
    lambda1: float = Field(default=1.0, ge=0.0)
    lambda2: float = Field(default=1.0, ge=0.0)
    patience: int = Field(default=10, ge=1)
    seed: Optional[int] = None


class EvaluationConfig(StrictModel):
    snr_bin_width_db: float = Field(default=5.0, gt=0.0)
    snr_bin_max_db: float = Field(default=30.0, gt=0.0)


class RunConfig(StrictModel):
    """Everything a command needs besides its input and output paths."""

    seed: int = Field(default=0, ge=0)
    simulation: SimulationConfig = Field(default_factory=SimulationConfig)
    ae_model: AeArchitecture = Field(default_factory=AeArchitecture)
    diag_model: DiagArchitecture = Field(default_factory=DiagArchitecture)
    train_ae: TrainConfig = Field(default_factory=TrainConfig)
    train_diag: TrainConfig = Field(default_factory=TrainConfig)
    evaluation: EvaluationConfig = Field(default_factory=EvaluationConfig)


# --------------------------------------------------------------------------- training / reports


class EpochLog(BaseModel):
    epoch: int
    train_loss: float
    val_loss: Optional[float] = None
    classification_loss: Optional[float] = None
    position_loss: Optional[float] = None


class ModelMetadata(BaseModel):
    """Training provenance stored alongside model parameters."""

    seed: int = Field(default=0, ge=0)
    config_hash: str = ""
    snr_range_db: Tuple[float, float] = (0.0, 30.0)
    theta: Optional[float] = None
    lambda1: Optional[float] = None
    lambda2: Optional[float] = None
    epochs_trained: int = 0


class DetectionCounts(BaseModel):
    tp: int = Field(default=0, ge=0)
    tn: int = Field(default=0, ge=0)
    fp: int = Field(default=0, ge=0)
    fn: int = Field(default=0, ge=0)

    @computed_field
    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


class DetectionMetrics(BaseModel):
    precision: float
    recall: float
    f1: float
    degenerate: bool = False


class ThresholdPoint(BaseModel):
    theta: float
    precision: float
    recall: float
    f1: float


class ThresholdSweep(BaseModel):
    theta: float
    f1: float
    curve: List[ThresholdPoint]


class RocPoint(BaseModel):
    threshold: float
    fpr: float
    tpr: float


class RocCurve(BaseModel):
    points: List[RocPoint]
    auc: float


class AccuracyBin(BaseModel):
    low_db: float
    high_db: float
    count: int
    accuracy: float


class RmseBin(BaseModel):
    low_db: float
    high_db: float
    count: int
    rmse_index: float
    rmse_m: float


class ClassStat(BaseModel):
    label: FaultLabel
    support: int
    accuracy: float
    precision: float
    recall: float
    f1: float


class ConfusionPair(BaseModel):
    true_label: FaultLabel
    predicted_label: FaultLabel
    count: int


class DetectionReport(BaseModel):
    """Anomaly detection results of the autoencoder at a calibrated threshold."""

    theta: float
    counts: DetectionCounts
    metrics: DetectionMetrics
    roc: RocCurve
    threshold_curve: List[ThresholdPoint] = Field(default_factory=list)
    accuracy_by_snr_bin: List[AccuracyBin] = Field(default_factory=list)


class DiagnosisReport(BaseModel):
    """Fault classification and localization results."""

    labels: List[FaultLabel] = Field(default_factory=lambda: list(FAULT_CLASSES))
    confusion_matrix: List[List[int]]
    accuracy: float
    per_class: List[ClassStat]
    physical_attack_accuracy: Optional[float] = None
    accuracy_by_snr_bin: List[AccuracyBin]
    rmse_index: float
    rmse_m: float
    rmse_by_snr_bin: List[RmseBin]
    accuracy_trend: Optional[float] = None
    rmse_trend: Optional[float] = None
    top_confusions: List[ConfusionPair] = Field(default_factory=list)


class EvalReport(BaseModel):
    detection: Optional[DetectionReport] = None
    diagnosis: Optional[DiagnosisReport] = None


class DetectResult(BaseModel):
    """Verdict for one input sequence; diagnosis fields are set only for anomalous input."""

    verdict: str
    score: float
    theta: float
    snr_db: float
    label: Optional[FaultLabel] = None
    class_probs: Optional[Dict[str, float]] = None
    position_index: Optional[int] = None
    position_m: Optional[float] = None
    attention: Optional[List[float]] = None
