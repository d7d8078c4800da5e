"""Activations and their derivatives."""

from __future__ import annotations

from enum import Enum

import numpy as np

from .tensor import ArrayLike, Tensor, as_tensor


class Activation(str, Enum):
    """Activation applied after a dense affine map."""
    RELU = "relu"
    TANH = "tanh"
    SIGMOID = "sigmoid"
    SOFTMAX = "softmax"
    IDENTITY = "identity"


def sigmoid(x: ArrayLike) -> Tensor:
    """Elementwise logistic function, evaluated without overflow for large |x|."""
    x = as_tensor(x, "sigmoid input")
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def tanh(x: ArrayLike) -> Tensor:
    return np.tanh(as_tensor(x, "tanh input"))


def relu(x: ArrayLike) -> Tensor:
    return np.maximum(as_tensor(x, "relu input"), 0.0)


def softmax(x: ArrayLike, axis: int = -1) -> Tensor:
    """Normalized exponentials along ``axis`` with max-subtraction."""
    x = as_tensor(x, "softmax input")
    if x.ndim == 0 or x.shape[axis] == 0:
        raise ValueError("softmax requires at least one element")
    shifted = np.exp(x - np.max(x, axis=axis, keepdims=True))
    return shifted / np.sum(shifted, axis=axis, keepdims=True)


def activate(z: Tensor, activation: Activation) -> Tensor:
    activation = Activation(activation)
    if activation == Activation.RELU:
        return relu(z)
    if activation == Activation.TANH:
        return tanh(z)
    if activation == Activation.SIGMOID:
        return sigmoid(z)
    if activation == Activation.SOFTMAX:
        return softmax(z)
    return as_tensor(z)


def activation_backward(
    upstream: Tensor, pre: Tensor, out: Tensor, activation: Activation
) -> Tensor:
    """Gradient w.r.t. the pre-activation ``pre`` given the gradient w.r.t. ``out``."""
    activation = Activation(activation)
    if activation == Activation.RELU:
        return upstream * (pre > 0.0)
    if activation == Activation.TANH:
        return upstream * (1.0 - out * out)
    if activation == Activation.SIGMOID:
        return upstream * out * (1.0 - out)
    if activation == Activation.SOFTMAX:
        return softmax_backward(upstream, out)
    return upstream


def softmax_backward(upstream: Tensor, probs: Tensor, axis: int = -1) -> Tensor:
    """Vector-Jacobian product of softmax expressed through its output."""
    return probs * (upstream - np.sum(upstream * probs, axis=axis, keepdims=True))
