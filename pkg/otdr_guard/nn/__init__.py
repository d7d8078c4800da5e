"""Minimal deterministic neural-network core on numpy float64 arrays."""

from .functional import relu, sigmoid, softmax, tanh
from .layers import (
    AttentionParams,
    BiGruParams,
    DenseParams,
    GruLayerParams,
    attention_backward,
    attention_forward,
    bigru_backward,
    bigru_forward,
    bigru_forward_cached,
    dense_backward,
    dense_forward,
    dense_forward_cached,
    gru_cell_backward,
    gru_cell_forward,
    gru_sequence_backward,
    gru_sequence_forward,
    gru_sequence_forward_cached,
)
from .losses import (
    batch_cross_entropy_loss,
    batch_mse_loss,
    combined_loss,
    combined_loss_backward,
    cross_entropy_backward,
    cross_entropy_loss,
    mse_backward,
    mse_loss,
)
from .optim import Adam, AdamState, adam_step
from .tensor import Tensor, as_tensor

__all__ = [
    "Adam",
    "AdamState",
    "AttentionParams",
    "BiGruParams",
    "DenseParams",
    "GruLayerParams",
    "Tensor",
    "adam_step",
    "as_tensor",
    "attention_backward",
    "attention_forward",
    "batch_cross_entropy_loss",
    "batch_mse_loss",
    "bigru_backward",
    "bigru_forward",
    "bigru_forward_cached",
    "combined_loss",
    "combined_loss_backward",
    "cross_entropy_backward",
    "cross_entropy_loss",
    "dense_backward",
    "dense_forward",
    "dense_forward_cached",
    "gru_cell_backward",
    "gru_cell_forward",
    "gru_sequence_backward",
    "gru_sequence_forward",
    "gru_sequence_forward_cached",
    "mse_backward",
    "mse_loss",
    "relu",
    "sigmoid",
    "softmax",
    "tanh",
]
