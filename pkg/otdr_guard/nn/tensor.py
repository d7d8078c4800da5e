"""Tensor helpers.

A Tensor is a ``numpy.ndarray`` of dtype float64. Every public op funnels its
inputs through :func:`as_tensor` so that NaN/Inf never propagate silently.
"""

from __future__ import annotations

from typing import Sequence, Union

import numpy as np

from ..errors import NonFiniteError, ShapeError

Tensor = np.ndarray
ArrayLike = Union[np.ndarray, Sequence[float], float]


def as_tensor(value: ArrayLike, name: str = "tensor") -> Tensor:
    """Convert to a float64 array and reject non-finite entries."""
    arr = np.asarray(value, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{name} contains NaN or infinite values")
    return arr


def check_last_dim(arr: Tensor, size: int, name: str) -> None:
    """Raise ShapeError unless the trailing dimension equals ``size``."""
    if arr.ndim == 0 or arr.shape[-1] != size:
        raise ShapeError(f"{name}: expected trailing dimension {size}, got shape {arr.shape}")


def check_same_shape(a: Tensor, b: Tensor, what: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{what}: shape {a.shape} does not match {b.shape}")


def outer_sum(upstream: Tensor, inputs: Tensor) -> Tensor:
    """Sum of outer products over all leading (batch/time) dimensions.

    ``upstream`` is ``[..., out]`` and ``inputs`` is ``[..., in]``; the result is
    the ``[out, in]`` weight gradient of an affine map.
    """
    up = upstream.reshape(-1, upstream.shape[-1])
    x = inputs.reshape(-1, inputs.shape[-1])
    return up.T @ x


def leading_sum(upstream: Tensor) -> Tensor:
    """Sum over every dimension except the last (bias gradient)."""
    return upstream.reshape(-1, upstream.shape[-1]).sum(axis=0)
