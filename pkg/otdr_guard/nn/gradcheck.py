"""Central finite-difference gradient checking."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .tensor import Tensor


def numerical_gradient(f: Callable[[], float], x: Tensor, step: float = 1e-5) -> Tensor:
    """Central differences of scalar ``f()`` w.r.t. every entry of ``x`` (mutated in place, restored)."""
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        original = x[idx]
        x[idx] = original + step
        plus = f()
        x[idx] = original - step
        minus = f()
        x[idx] = original
        grad[idx] = (plus - minus) / (2.0 * step)
    return grad


def relative_error(analytic: Tensor, numeric: Tensor, floor: float = 1e-8) -> float:
    """Max-norm relative error, with ``floor`` guarding near-zero gradients."""
    diff = np.max(np.abs(analytic - numeric)) if np.size(analytic) else 0.0
    scale = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)), floor) if np.size(analytic) else 1.0
    return float(diff / scale)
