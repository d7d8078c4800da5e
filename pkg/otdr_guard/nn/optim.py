"""Adam optimizer."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Dict, Tuple

import numpy as np

from ..errors import ShapeError
from .tensor import Tensor, as_tensor


@dataclass(frozen=True)
class AdamState:
    """Moment estimates for one parameter tensor."""
    m: Tensor
    v: Tensor
    t: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self) -> None:
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ValueError("Adam betas must lie in (0, 1)")
        if self.m.shape != self.v.shape:
            raise ShapeError("Adam moments must share a shape")
        if self.t < 0:
            raise ValueError("Adam step count must be non-negative")

    @classmethod
    def for_shape(cls, shape: Tuple[int, ...], **hyper: float) -> AdamState:
        return cls(np.zeros(shape), np.zeros(shape), 0, **hyper)


def adam_step(state: AdamState, params: Tensor, grads: Tensor) -> Tuple[Tensor, AdamState]:
    """One bias-corrected Adam update. Inputs are left untouched."""
    params = as_tensor(params, "params")
    grads = as_tensor(grads, "grads")
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ShapeError(
            f"adam shapes differ: params {params.shape}, grads {grads.shape}, state {state.m.shape}"
        )
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    updated = params - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return updated, replace(state, m=m, v=v, t=t)


class Adam:
    """Keeps one :class:`AdamState` per named parameter for a training loop."""

    def __init__(
        self,
        learning_rate: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        epsilon: float = 1e-8,
    ):
        self.hyper = dict(learning_rate=learning_rate, beta1=beta1, beta2=beta2, epsilon=epsilon)
        self.states: Dict[str, AdamState] = {}

    def step(self, params: Dict[str, Tensor], grads: Dict[str, Tensor]) -> Dict[str, Tensor]:
        """Return updated parameters; iteration follows the order of ``params``."""
        updated: Dict[str, Tensor] = {}
        for name, value in params.items():
            state = self.states.get(name) or AdamState.for_shape(value.shape, **self.hyper)
            updated[name], self.states[name] = adam_step(state, value, grads[name])
        return updated
