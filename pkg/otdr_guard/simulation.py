"""Parametric OTDR trace synthesis and sequence preprocessing.

A trace is the backscatter level in dB along the fiber: a linear attenuation
slope, step losses at splices, ramped losses at bends/taps, Gaussian spikes at
reflective events and a drop to the noise floor after a cut. Traces are cut
into 30-sample windows, min-max normalized and labeled from the ground-truth
events they contain.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Union

import numpy as np

from .config import config_hash
from .errors import ConfigError
from .models import (
    LABEL_EVENTS,
    SEQUENCE_LENGTH,
    SNR_CEILING_DB,
    Dataset,
    DatasetMode,
    EventKind,
    EventSpec,
    FaultLabel,
    FiberSpec,
    SequenceSample,
    SimulationConfig,
    Split,
)
from .nn.tensor import as_tensor
from .seeding import substream

NOISE_FLOOR_DB = 40.0  # below launch level
SeedLike = Union[int, np.random.Generator, None]


@dataclass
class OtdrTrace:
    """Backscatter trace with the ground truth it was generated from."""

    samples_db: np.ndarray
    meters_per_sample: float
    events: List[EventSpec]
    noiseless_db: np.ndarray
    snr_db: Optional[float] = None
    noise_sigma_db: float = 0.0

    @property
    def num_samples(self) -> int:
        return int(self.samples_db.shape[0])

    @property
    def distances_m(self) -> np.ndarray:
        return np.arange(self.num_samples) * self.meters_per_sample


def event_index(event: EventSpec, meters_per_sample: float) -> int:
    """Sample index of an event (round half up)."""
    return int(np.floor(event.position_m / meters_per_sample + 0.5))


def reflection_width_samples(fiber: FiberSpec) -> float:
    """Gaussian sigma of a reflective spike; +-2 sigma spans the pulse width."""
    return max(fiber.pulse_width_ns / fiber.sample_interval_ns / 4.0, 0.5)


def synthesize_trace(fiber: FiberSpec, events: Sequence[EventSpec]) -> OtdrTrace:
    """Noiseless trace of ``fiber`` carrying ``events`` (sorted by position).

    Sample ``k`` sits at ``k * meters_per_sample``, so the last sample lies within
    one sample of the fiber end: the end level of an event-free trace is
    ``attenuation * (num_samples - 1) * meters_per_sample`` below launch, which for
    5 km at 0.2 dB/km is 0.99996 dB rather than exactly 1 dB.
    """
    n = fiber.num_samples
    if n < 1:
        raise ValueError("fiber is shorter than one sample")
    mps = fiber.meters_per_sample
    length_m = fiber.length_km * 1000.0
    positions = [e.position_m for e in events]
    if positions != sorted(positions):
        raise ValueError("events must be sorted by position")

    k = np.arange(n)
    level = fiber.launch_level_db - fiber.attenuation_db_per_km * k * mps / 1000.0
    spikes = np.zeros(n)
    sigma = reflection_width_samples(fiber)
    cut_index: Optional[int] = None

    for event in events:
        e = event_index(event, mps)
        if event.position_m > length_m or e >= n:
            raise ValueError(f"{event.kind.value} at {event.position_m} m lies beyond the fiber end")
        if cut_index is not None:
            raise ValueError(f"{event.kind.value} at {event.position_m} m follows a fiber cut")
        if event.kind == EventKind.BEND_TAP:
            level -= event.loss_db * np.clip((k - e) / event.ramp_samples, 0.0, 1.0)
        else:
            level -= event.loss_db * (k > e)
        if event.reflectance_db:
            spikes += event.reflectance_db * np.exp(-0.5 * ((k - e) / sigma) ** 2)
        if event.kind == EventKind.FIBER_CUT:
            cut_index = e

    noiseless = level + spikes
    if cut_index is not None:
        noiseless[cut_index + 1:] = fiber.launch_level_db - NOISE_FLOOR_DB
    return OtdrTrace(
        samples_db=noiseless.copy(),
        meters_per_sample=mps,
        events=list(events),
        noiseless_db=noiseless,
    )


def add_noise_for_snr(trace: OtdrTrace, target_snr_db: float, seed: SeedLike = None) -> OtdrTrace:
    """Add white Gaussian noise so that ``10 log10(dynamic range / sigma)`` equals the target."""
    if not 0.0 <= target_snr_db <= SNR_CEILING_DB:
        raise ValueError(f"target SNR must lie in [0, {SNR_CEILING_DB:g}] dB")
    dynamic_range = float(np.max(trace.noiseless_db) - np.min(trace.noiseless_db))
    if dynamic_range <= 0.0:
        raise ValueError("cannot set an SNR on a flat trace")
    sigma = dynamic_range / 10.0 ** (target_snr_db / 10.0)
    rng = np.random.default_rng(seed)
    noisy = trace.noiseless_db + rng.normal(0.0, sigma, size=trace.noiseless_db.shape)
    return replace(trace, samples_db=noisy, snr_db=float(target_snr_db), noise_sigma_db=sigma)


def compute_snr(points: Sequence[float], noise_estimate: Optional[float] = None) -> float:
    """SNR of a window in dB: dynamic range over noise sigma, clamped to [0, 40].

    Without ``noise_estimate`` sigma is the standard deviation of the residuals
    after subtracting a least-squares line.
    """
    pts = as_tensor(points, "points")
    if pts.ndim != 1 or pts.size < 3:
        raise ValueError("compute_snr needs a vector of at least 3 points")
    dynamic_range = float(np.max(pts) - np.min(pts))
    if dynamic_range <= 0.0:
        return 0.0
    if noise_estimate is None:
        x = np.arange(pts.size, dtype=np.float64)
        slope, intercept = np.polyfit(x, pts, 1)
        sigma = float(np.std(pts - (slope * x + intercept)))
    else:
        sigma = float(noise_estimate)
    if sigma <= dynamic_range * 1e-12:
        return SNR_CEILING_DB
    return float(np.clip(10.0 * np.log10(dynamic_range / sigma), 0.0, SNR_CEILING_DB))


def normalize_window(window: np.ndarray) -> np.ndarray:
    """Min-max scale into [0, 1]; a flat window maps to zeros."""
    low, high = float(np.min(window)), float(np.max(window))
    if high == low:
        return np.zeros_like(window)
    return np.clip((window - low) / (high - low), 0.0, 1.0)


def segment_and_normalize(trace: OtdrTrace, stride: int = SEQUENCE_LENGTH) -> List[SequenceSample]:
    """Cut a trace into labeled, normalized 30-sample windows (short tail dropped)."""
    if trace.num_samples < SEQUENCE_LENGTH:
        raise ValueError(f"trace has {trace.num_samples} samples, fewer than {SEQUENCE_LENGTH}")
    if stride < 1:
        raise ValueError("stride must be positive")
    faults = [
        (event_index(e, trace.meters_per_sample), e.kind.label)
        for e in trace.events
        if e.kind.label != FaultLabel.NORMAL
    ]

    samples: List[SequenceSample] = []
    for start in range(0, trace.num_samples - SEQUENCE_LENGTH + 1, stride):
        stop = start + SEQUENCE_LENGTH
        window = trace.samples_db[start:stop]
        if trace.snr_db is not None:
            snr = compute_snr(trace.noiseless_db[start:stop], noise_estimate=trace.noise_sigma_db)
        else:
            snr = compute_snr(window)
        inside = [(idx, label) for idx, label in faults if start <= idx < stop]
        label, position = (inside[0][1], inside[0][0] - start) if inside else (FaultLabel.NORMAL, None)
        samples.append(
            SequenceSample(
                points=normalize_window(window).tolist(),
                snr_db=snr,
                label=label,
                position_index=position,
            )
        )
    return samples


# --------------------------------------------------------------------------- datasets


def _uniform(rng: np.random.Generator, bounds) -> float:
    low, high = bounds
    return float(rng.uniform(low, high))


def _draw_event(
    config: SimulationConfig, kind: EventKind, index: int, mps: float, rng: np.random.Generator
) -> EventSpec:
    ranges = config.events
    position_m = index * mps
    if kind == EventKind.SPLICE_LOSS:
        return EventSpec(kind=kind, position_m=position_m, loss_db=_uniform(rng, ranges.splice_loss_db))
    if kind == EventKind.BEND_TAP:
        low, high = ranges.tap_ramp_samples
        return EventSpec(
            kind=kind,
            position_m=position_m,
            loss_db=_uniform(rng, ranges.tap_loss_db),
            ramp_samples=int(rng.integers(low, high + 1)),
        )
    if kind == EventKind.DIRTY_CONNECTOR:
        return EventSpec(
            kind=kind,
            position_m=position_m,
            loss_db=_uniform(rng, ranges.dirty_loss_db),
            reflectance_db=_uniform(rng, ranges.dirty_reflectance_db),
        )
    if kind == EventKind.FIBER_CUT:
        reflect = rng.uniform() < config.cut_reflection_probability
        reflectance = _uniform(rng, ranges.cut_reflectance_db)
        return EventSpec(kind=kind, position_m=position_m, reflectance_db=reflectance if reflect else None)
    if kind == EventKind.CONNECTOR_REFLECTIVE:
        return EventSpec(
            kind=kind,
            position_m=position_m,
            loss_db=_uniform(rng, ranges.connector_loss_db),
            reflectance_db=_uniform(rng, ranges.connector_reflectance_db),
        )
    return EventSpec(
        kind=kind, position_m=position_m, reflectance_db=_uniform(rng, ranges.reflector_reflectance_db)
    )


def simulate_sequence(
    config: SimulationConfig, label: FaultLabel, rng: np.random.Generator
) -> SequenceSample:
    """One labeled window drawn from a random 30-sample section of the configured fiber."""
    fiber = config.fiber
    mps = fiber.meters_per_sample
    section_m = (SEQUENCE_LENGTH + 0.5) * mps
    offset_m = float(rng.uniform(0.0, max(fiber.length_km * 1000.0 - section_m, 0.0)))
    section = fiber.model_copy(
        update={
            "length_km": section_m / 1000.0,
            "launch_level_db": fiber.launch_level_db - fiber.attenuation_db_per_km * offset_m / 1000.0,
        }
    )

    low, high = config.position_margin, SEQUENCE_LENGTH - 1 - config.position_margin
    index = int(rng.integers(low, high + 1))
    events: List[EventSpec] = []
    if label != FaultLabel.NORMAL:
        events.append(_draw_event(config, LABEL_EVENTS[label], index, mps, rng))
    elif rng.uniform() < config.normal_event_fraction:
        kind = EventKind.CONNECTOR_REFLECTIVE if rng.uniform() < 0.5 else EventKind.REFLECTOR
        events.append(_draw_event(config, kind, index, mps, rng))

    trace = synthesize_trace(section, events)
    snr = float(rng.uniform(config.snr_min_db, config.snr_max_db))
    noisy = add_noise_for_snr(trace, snr, seed=rng)
    return segment_and_normalize(noisy)[0]


def _round_half_up(value: float) -> int:
    return int(np.floor(value + 0.5))


def _class_plan(config: SimulationConfig) -> List[FaultLabel]:
    """Labels in generation order: normals first, then fault classes balanced within +-1."""
    plan = [FaultLabel.NORMAL] * (config.normal_count if config.mode == DatasetMode.AE else 0)
    base, extra = divmod(config.faulty_count, len(config.classes))
    for i, label in enumerate(config.classes):
        plan.extend([label] * (base + (1 if i < extra else 0)))
    return plan


def _check_feasible(config: SimulationConfig) -> None:
    if config.mode == DatasetMode.DIAG:
        if config.normal_count:
            raise ConfigError("diag datasets hold faulty sequences only; set normal_count to 0")
        if config.faulty_count == 0:
            raise ConfigError("diag datasets need faulty_count > 0")
        return
    total = config.normal_count + config.faulty_count
    if config.normal_count == 0:
        raise ConfigError("ae datasets need normal_count > 0")
    train = _round_half_up(config.fractions.train * total)
    if train > config.normal_count:
        raise ConfigError(
            f"ae train split needs {train} normal sequences but normal_count is {config.normal_count}"
        )


def _assign_splits(config: SimulationConfig, plan: List[FaultLabel], seed: int) -> List[Split]:
    rng = substream(seed, "split")
    fractions = config.fractions
    splits: List[Optional[Split]] = [None] * len(plan)
    groups = {label: [i for i, lab in enumerate(plan) if lab == label] for label in dict.fromkeys(plan)}

    if config.mode == DatasetMode.AE:
        normals = list(rng.permutation(groups.pop(FaultLabel.NORMAL)))
        n_train = _round_half_up(fractions.train * len(plan))
        for i in normals[:n_train]:
            splits[i] = Split.TRAIN
        groups = {FaultLabel.NORMAL: normals[n_train:], **groups}
        rest = fractions.val + fractions.test
        val_share = fractions.val / rest if rest > 0 else 0.0
        for members in groups.values():
            members = list(rng.permutation(members)) if members else []
            n_val = _round_half_up(val_share * len(members))
            for j, i in enumerate(members):
                splits[i] = Split.VAL if j < n_val else Split.TEST
    else:
        for members in groups.values():
            members = list(rng.permutation(members))
            n_train = _round_half_up(fractions.train * len(members))
            n_val = min(_round_half_up(fractions.val * len(members)), len(members) - n_train)
            for j, i in enumerate(members):
                if j < n_train:
                    splits[i] = Split.TRAIN
                elif j < n_train + n_val:
                    splits[i] = Split.VAL
                else:
                    splits[i] = Split.TEST
    return splits  # type: ignore[return-value]


def generate_dataset(config: SimulationConfig, seed: int) -> Dataset:
    """Labeled, split dataset; a pure function of ``(config, seed)``."""
    _check_feasible(config)
    plan = _class_plan(config)
    splits = _assign_splits(config, plan, seed)
    samples = []
    for i, (label, split) in enumerate(zip(plan, splits)):
        sample = simulate_sequence(config, label, substream(seed, "dataset", i))
        samples.append(sample.model_copy(update={"split": split}))
    return Dataset(mode=config.mode, seed=seed, config_hash=config_hash(config), samples=samples)
