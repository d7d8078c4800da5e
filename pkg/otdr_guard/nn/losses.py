"""Loss functions and their gradients.

Reconstruction loss is the per-sequence sum of squared errors; batch variants
average those sums over the leading batch axis.
"""

from __future__ import annotations

from typing import Tuple

import numpy as np

from .tensor import ArrayLike, Tensor, as_tensor, check_same_shape

PROB_FLOOR = 1e-12


def mse_loss(x: ArrayLike, x_hat: ArrayLike) -> float:
    """Sum of squared elementwise differences over one sequence."""
    x = as_tensor(x, "x")
    x_hat = as_tensor(x_hat, "x_hat")
    check_same_shape(x, x_hat, "mse_loss")
    diff = x_hat - x
    return float(np.sum(diff * diff))


def mse_backward(x: ArrayLike, x_hat: ArrayLike) -> Tensor:
    """Gradient of :func:`mse_loss` w.r.t. ``x_hat``."""
    x = as_tensor(x, "x")
    x_hat = as_tensor(x_hat, "x_hat")
    check_same_shape(x, x_hat, "mse_backward")
    return 2.0 * (x_hat - x)


def batch_mse_loss(x: ArrayLike, x_hat: ArrayLike) -> Tuple[float, Tensor]:
    """Mean over axis 0 of per-sequence squared-error sums, plus gradient w.r.t. ``x_hat``."""
    x = as_tensor(x, "x")
    x_hat = as_tensor(x_hat, "x_hat")
    check_same_shape(x, x_hat, "batch_mse_loss")
    batch = x.shape[0]
    diff = x_hat - x
    per_sequence = np.sum(diff.reshape(batch, -1) ** 2, axis=1)
    return float(np.mean(per_sequence)), 2.0 * diff / batch


def _check_distribution(probs: Tensor) -> None:
    if probs.ndim != 1 or probs.size == 0:
        raise ValueError("probabilities must be a non-empty vector")
    if np.any(probs < 0.0) or abs(float(np.sum(probs)) - 1.0) > 1e-9:
        raise ValueError("probabilities must form a distribution")


def _check_index(true_class: int, size: int) -> None:
    if not 0 <= int(true_class) < size:
        raise IndexError(f"class index {true_class} out of range for {size} classes")


def cross_entropy_loss(probs: ArrayLike, true_class: int) -> float:
    """Negative log-likelihood of ``true_class`` with probabilities floored at 1e-12."""
    probs = as_tensor(probs, "probs")
    _check_distribution(probs)
    _check_index(true_class, probs.size)
    return float(-np.log(max(probs[int(true_class)], PROB_FLOOR)))


def cross_entropy_backward(probs: ArrayLike, true_class: int) -> Tensor:
    """Gradient of :func:`cross_entropy_loss` w.r.t. ``probs``."""
    probs = as_tensor(probs, "probs")
    _check_index(true_class, probs.size)
    grad = np.zeros_like(probs)
    p = probs[int(true_class)]
    if p >= PROB_FLOOR:
        grad[int(true_class)] = -1.0 / p
    return grad


def batch_cross_entropy_loss(probs: ArrayLike, labels: ArrayLike) -> Tuple[float, Tensor]:
    """Mean cross-entropy over a ``[B, K]`` batch and its gradient w.r.t. ``probs``."""
    probs = as_tensor(probs, "probs")
    labels = np.asarray(labels, dtype=np.int64)
    batch, classes = probs.shape
    if labels.shape != (batch,):
        raise ValueError(f"expected {batch} labels, got shape {labels.shape}")
    if np.any(labels < 0) or np.any(labels >= classes):
        raise IndexError("class index out of range")
    rows = np.arange(batch)
    picked = probs[rows, labels]
    clamped = np.maximum(picked, PROB_FLOOR)
    grad = np.zeros_like(probs)
    grad[rows, labels] = np.where(picked >= PROB_FLOOR, -1.0 / clamped, 0.0) / batch
    return float(np.mean(-np.log(clamped))), grad


def _check_weights(lambda1: float, lambda2: float) -> None:
    if lambda1 < 0 or lambda2 < 0:
        raise ValueError("loss weights must be non-negative")


def combined_loss(l1: float, l2: float, lambda1: float, lambda2: float) -> float:
    """Weighted multi-task loss ``lambda1 * l1 + lambda2 * l2``."""
    _check_weights(lambda1, lambda2)
    return lambda1 * l1 + lambda2 * l2


def combined_loss_backward(lambda1: float, lambda2: float) -> Tuple[float, float]:
    """Partial derivatives of :func:`combined_loss` w.r.t. ``l1`` and ``l2``."""
    _check_weights(lambda1, lambda2)
    return lambda1, lambda2
