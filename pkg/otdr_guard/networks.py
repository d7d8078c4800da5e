"""GRU autoencoder for anomaly detection and attention-BiGRU multi-task diagnoser.

Both models read a sequence as 31 time steps of one feature: the 30 normalized
trace points followed by the sequence SNR scaled to [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import ClassVar, List, Sequence, Tuple

import numpy as np

from .errors import DataContractError
from .models import (
    FAULT_CLASSES,
    INPUT_STEPS,
    SEQUENCE_LENGTH,
    SNR_CEILING_DB,
    AeArchitecture,
    DiagArchitecture,
    FaultLabel,
    ModelMetadata,
    SequenceSample,
)
from .nn.functional import Activation
from .nn.layers import (
    AttentionCache,
    AttentionParams,
    BiGruCache,
    BiGruParams,
    DenseCache,
    DenseParams,
    GruLayerParams,
    GruSequenceCache,
    ParamBundle,
    attention_backward,
    attention_forward,
    bigru_backward,
    bigru_forward_cached,
    dense_backward,
    dense_forward_cached,
    gru_sequence_backward,
    gru_sequence_forward_cached,
)
from .nn.losses import batch_cross_entropy_loss, batch_mse_loss, combined_loss, mse_loss
from .nn.tensor import Tensor, as_tensor
from .seeding import substream

MAX_POSITION = SEQUENCE_LENGTH - 1


def build_input(sample: SequenceSample) -> Tensor:
    """``[31, 1]`` input: the 30 points then SNR / 40."""
    values = list(sample.points) + [sample.snr_db / SNR_CEILING_DB]
    return np.asarray(values, dtype=np.float64).reshape(INPUT_STEPS, 1)


def build_batch(samples: Sequence[SequenceSample]) -> Tensor:
    """``[B, 31, 1]`` stack of :func:`build_input`."""
    if not samples:
        return np.zeros((0, INPUT_STEPS, 1))
    return np.stack([build_input(s) for s in samples])


def class_index(label: FaultLabel) -> int:
    if label not in FAULT_CLASSES:
        raise DataContractError(f"'{label.value}' is not a fault class")
    return FAULT_CLASSES.index(label)


def position_target(sample: SequenceSample) -> float:
    """Fault position scaled to [0, 1]."""
    if sample.position_index is None:
        raise DataContractError("sample has no fault position")
    return sample.position_index / MAX_POSITION


def predicted_position_index(position_norm: float) -> int:
    """``round(position_norm * 29)`` with halves rounded up, clamped to [0, 29]."""
    index = int(np.floor(float(position_norm) * MAX_POSITION + 0.5))
    return min(max(index, 0), MAX_POSITION)


# --------------------------------------------------------------------------- autoencoder


@dataclass
class AeParams(ParamBundle):
    enc1: GruLayerParams
    enc2: GruLayerParams
    dec1: GruLayerParams
    dec2: GruLayerParams
    head: DenseParams


@dataclass
class AeModel:
    """Two-layer GRU encoder, mirrored GRU decoder and a per-step linear projection."""

    kind: ClassVar[str] = "ae"
    architecture: AeArchitecture
    params: AeParams
    metadata: ModelMetadata = field(default_factory=ModelMetadata)


def init_ae_model(
    architecture: AeArchitecture, seed: int = 0, zeros: bool = False
) -> AeModel:
    """Uniform +-1/sqrt(fan_in) weights from the ``init`` stream (or all zeros)."""
    outer, latent = architecture.hidden_sizes
    shapes = {
        "enc1": (1, outer),
        "enc2": (outer, latent),
        "dec1": (latent, latent),
        "dec2": (latent, outer),
    }
    rng = substream(seed, "init")
    make = (lambda i, h: GruLayerParams.zeros(i, h)) if zeros else (
        lambda i, h: GruLayerParams.init(i, h, rng)
    )
    layers = {name: make(i, h) for name, (i, h) in shapes.items()}
    head = DenseParams.zeros(outer, 1) if zeros else DenseParams.init(outer, 1, rng)
    return AeModel(architecture, AeParams(head=head, **layers), ModelMetadata(seed=seed))


@dataclass
class AeCache:
    enc1: GruSequenceCache
    enc2: GruSequenceCache
    dec1: GruSequenceCache
    dec2: GruSequenceCache
    head: DenseCache
    steps: int


def ae_forward_cached(model: AeModel, x: Tensor) -> Tuple[Tensor, AeCache]:
    x = as_tensor(x, "autoencoder input")
    p = model.params
    h1, c1 = gru_sequence_forward_cached(p.enc1, x)
    h2, c2 = gru_sequence_forward_cached(p.enc2, h1)
    latent = h2[..., -1, :]
    steps = x.shape[-2]
    decoder_inputs = np.zeros(x.shape[:-2] + (steps, p.dec1.in_size))
    d1, c3 = gru_sequence_forward_cached(p.dec1, decoder_inputs, h0=latent)
    d2, c4 = gru_sequence_forward_cached(p.dec2, d1)
    recon, c5 = dense_forward_cached(p.head, d2, Activation.IDENTITY)
    return recon, AeCache(c1, c2, c3, c4, c5, steps)


def ae_forward(model: AeModel, x: Tensor) -> Tensor:
    """Reconstruction of ``x``; the decoder unrolls from the final encoder state with zero inputs."""
    return ae_forward_cached(model, x)[0]


def ae_backward(cache: AeCache, d_recon: Tensor) -> AeParams:
    head_grads, d_d2 = dense_backward(cache.head, d_recon)
    dec2_grads, d_d1, _ = gru_sequence_backward(cache.dec2, d_d2)
    dec1_grads, _, d_latent = gru_sequence_backward(cache.dec1, d_d1)
    d_h2 = np.zeros(d_latent.shape[:-1] + (cache.steps, d_latent.shape[-1]))
    d_h2[..., -1, :] = d_latent
    enc2_grads, d_h1, _ = gru_sequence_backward(cache.enc2, d_h2)
    enc1_grads, _, _ = gru_sequence_backward(cache.enc1, d_h1)
    return AeParams(enc1_grads, enc2_grads, dec1_grads, dec2_grads, head_grads)


def reconstruction_loss(model: AeModel, batch: Tensor) -> Tuple[float, AeParams]:
    """Mean per-sequence squared reconstruction error of a ``[B, 31, 1]`` batch and its gradients."""
    recon, cache = ae_forward_cached(model, batch)
    loss, d_recon = batch_mse_loss(batch, recon)
    return loss, ae_backward(cache, d_recon)


def anomaly_score(model: AeModel, sample: SequenceSample) -> float:
    """Sum of squared reconstruction errors over the 31 input steps."""
    x = build_input(sample)
    return mse_loss(x, ae_forward(model, x))


def anomaly_scores(
    model: AeModel, samples: Sequence[SequenceSample], batch_size: int = 256
) -> np.ndarray:
    """Vector of :func:`anomaly_score` values, evaluated in batches."""
    scores: List[np.ndarray] = []
    for start in range(0, len(samples), batch_size):
        batch = build_batch(samples[start:start + batch_size])
        diff = ae_forward(model, batch) - batch
        scores.append(np.sum(diff.reshape(diff.shape[0], -1) ** 2, axis=1))
    return np.concatenate(scores) if scores else np.zeros(0)


class Verdict(str, Enum):
    NORMAL = "normal"
    ANOMALOUS = "anomalous"


def classify_scores(scores: Sequence[float], theta: float) -> np.ndarray:
    """Boolean mask of anomalous scores: strictly greater than ``theta``."""
    if theta < 0:
        raise ValueError("theta must be non-negative")
    return np.asarray(scores, dtype=np.float64) > theta


def detect(model: AeModel, sample: SequenceSample, theta: float) -> Verdict:
    """Anomalous iff the anomaly score exceeds ``theta``; a score equal to ``theta`` is normal."""
    if theta < 0:
        raise ValueError("theta must be non-negative")
    return Verdict.ANOMALOUS if anomaly_score(model, sample) > theta else Verdict.NORMAL


# --------------------------------------------------------------------------- diagnoser


@dataclass
class DiagParams(ParamBundle):
    bigru1: BiGruParams
    bigru2: BiGruParams
    attention: AttentionParams
    class_head: DenseParams
    position_head: DenseParams


@dataclass
class DiagModel:
    """Shared BiGRU + attention layers feeding a class head and a position head."""

    kind: ClassVar[str] = "diag"
    architecture: DiagArchitecture
    params: DiagParams
    metadata: ModelMetadata = field(default_factory=ModelMetadata)


def init_diag_model(
    architecture: DiagArchitecture, seed: int = 0, zeros: bool = False
) -> DiagModel:
    first, second = architecture.hidden_sizes
    attn = architecture.attention_size
    classes = len(FAULT_CLASSES)
    if zeros:
        params = DiagParams(
            BiGruParams.zeros(1, first),
            BiGruParams.zeros(first, second),
            AttentionParams.zeros(second, attn),
            DenseParams.zeros(second, classes),
            DenseParams.zeros(second, 1),
        )
    else:
        rng = substream(seed, "init")
        params = DiagParams(
            BiGruParams.init(1, first, rng),
            BiGruParams.init(first, second, rng),
            AttentionParams.init(second, attn, rng),
            DenseParams.init(second, classes, rng),
            DenseParams.init(second, 1, rng),
        )
    return DiagModel(architecture, params, ModelMetadata(seed=seed))


@dataclass
class DiagOutput:
    class_probs: Tensor
    position_norm: Tensor
    alphas: Tensor

    @property
    def predicted_class(self) -> FaultLabel:
        return FAULT_CLASSES[int(np.argmax(self.class_probs))]

    @property
    def predicted_index(self) -> int:
        return predicted_position_index(float(self.position_norm))


@dataclass
class DiagCache:
    bigru1: BiGruCache
    bigru2: BiGruCache
    attention: AttentionCache
    class_head: DenseCache
    position_head: DenseCache


def diag_forward_cached(model: DiagModel, x: Tensor) -> Tuple[Tensor, Tensor, Tensor, DiagCache]:
    """Returns class probabilities, the raw (unclamped) position, attention weights and the cache."""
    x = as_tensor(x, "diagnoser input")
    p = model.params
    y1, c1 = bigru_forward_cached(p.bigru1, x)
    y2, c2 = bigru_forward_cached(p.bigru2, y1)
    context, alphas, c3 = attention_forward(p.attention, y2)
    probs, c4 = dense_forward_cached(p.class_head, context, Activation.SOFTMAX)
    position, c5 = dense_forward_cached(p.position_head, context, Activation.IDENTITY)
    return probs, position[..., 0], alphas, DiagCache(c1, c2, c3, c4, c5)


def diag_forward(model: DiagModel, x: Tensor) -> DiagOutput:
    """Class distribution, position in [0, 1] and attention weights for ``[..., 31, 1]`` input."""
    probs, position, alphas, _ = diag_forward_cached(model, x)
    return DiagOutput(probs, np.clip(position, 0.0, 1.0), alphas)


def diag_backward(cache: DiagCache, d_probs: Tensor, d_position: Tensor) -> DiagParams:
    class_grads, d_context = dense_backward(cache.class_head, d_probs)
    position_grads, d_context_pos = dense_backward(cache.position_head, d_position[..., None])
    attention_grads, d_y2 = attention_backward(cache.attention, d_context + d_context_pos)
    bigru2_grads, d_y1 = bigru_backward(cache.bigru2, d_y2)
    bigru1_grads, _ = bigru_backward(cache.bigru1, d_y1)
    return DiagParams(bigru1_grads, bigru2_grads, attention_grads, class_grads, position_grads)


@dataclass
class MultitaskLoss:
    total: float
    classification: float
    position: float
    grads: DiagParams


def multitask_loss(
    model: DiagModel,
    batch: Tensor,
    classes: np.ndarray,
    positions: np.ndarray,
    lambda1: float = 1.0,
    lambda2: float = 1.0,
) -> MultitaskLoss:
    """``lambda1 * cross-entropy + lambda2 * position MSE`` over a batch, with gradients."""
    probs, position, _, cache = diag_forward_cached(model, batch)
    l1, d_probs = batch_cross_entropy_loss(probs, classes)
    l2, d_position = batch_mse_loss(np.asarray(positions, dtype=np.float64), position)
    total = combined_loss(l1, l2, lambda1, lambda2)
    grads = diag_backward(cache, lambda1 * d_probs, lambda2 * d_position)
    return MultitaskLoss(total, l1, l2, grads)


def diag_targets(samples: Sequence[SequenceSample]) -> Tuple[np.ndarray, np.ndarray]:
    """Class indices and normalized positions of faulty samples."""
    classes = np.array([class_index(s.label) for s in samples], dtype=np.int64)
    positions = np.array([position_target(s) for s in samples], dtype=np.float64)
    return classes, positions


def diagnose(model: DiagModel, samples: Sequence[SequenceSample], batch_size: int = 256) -> DiagOutput:
    """Batched :func:`diag_forward` over samples; outputs are stacked along axis 0."""
    outputs = [
        diag_forward(model, build_batch(samples[start:start + batch_size]))
        for start in range(0, len(samples), batch_size)
    ]
    if not outputs:
        return DiagOutput(np.zeros((0, len(FAULT_CLASSES))), np.zeros(0), np.zeros((0, INPUT_STEPS)))
    return DiagOutput(
        np.concatenate([o.class_probs for o in outputs]),
        np.concatenate([o.position_norm for o in outputs]),
        np.concatenate([o.alphas for o in outputs]),
    )
