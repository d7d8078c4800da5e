"""Dense, GRU, bidirectional GRU and attention layers with analytic backward passes.

Every forward op accepts arbitrary leading batch dimensions; recurrent ops use
axis -2 as time. Backward ops take the cache produced by the matching forward
op and return parameter gradients (same bundle type as the parameters) plus the
gradient w.r.t. the inputs. Parameter gradients are summed over batch dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Dict, List, Optional, Tuple, TypeVar

import numpy as np

from ..errors import ShapeError
from .functional import Activation, activate, activation_backward, sigmoid, softmax, softmax_backward
from .tensor import ArrayLike, Tensor, as_tensor, check_last_dim, leading_sum, outer_sum

P = TypeVar("P", bound="ParamBundle")


class ParamBundle:
    """Mixin for dataclasses whose fields are tensors or nested bundles."""

    def tensors(self, prefix: str = "") -> Dict[str, Tensor]:
        """Flat ``name -> array`` view; nested bundles use dotted names."""
        out: Dict[str, Tensor] = {}
        for f in fields(self):  # type: ignore[arg-type]
            value = getattr(self, f.name)
            if isinstance(value, ParamBundle):
                out.update(value.tensors(f"{prefix}{f.name}."))
            else:
                out[f"{prefix}{f.name}"] = value
        return out

    def with_tensors(self: P, flat: Dict[str, Tensor]) -> P:
        """New bundle of the same structure with arrays taken from ``flat``."""
        kwargs = {}
        for f in fields(self):  # type: ignore[arg-type]
            value = getattr(self, f.name)
            if isinstance(value, ParamBundle):
                sub = {
                    key[len(f.name) + 1:]: arr
                    for key, arr in flat.items()
                    if key.startswith(f.name + ".")
                }
                kwargs[f.name] = value.with_tensors(sub)
            else:
                if f.name not in flat:
                    raise ShapeError(f"missing parameter '{f.name}'")
                arr = np.array(flat[f.name], dtype=np.float64)
                if arr.shape != value.shape:
                    raise ShapeError(
                        f"parameter '{f.name}' has shape {arr.shape}, expected {value.shape}"
                    )
                kwargs[f.name] = arr
        return type(self)(**kwargs)

    def zeros_like(self: P) -> P:
        return self.with_tensors({k: np.zeros_like(v) for k, v in self.tensors().items()})

    def copy(self: P) -> P:
        return self.with_tensors(self.tensors())


def _uniform(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int) -> Tensor:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


# --------------------------------------------------------------------------- dense


@dataclass
class DenseParams(ParamBundle):
    """Affine map ``x @ weight.T + bias``."""
    weight: Tensor  # [out, in]
    bias: Tensor  # [out]

    def __post_init__(self) -> None:
        self.weight = as_tensor(self.weight, "dense weight")
        self.bias = as_tensor(self.bias, "dense bias")
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ShapeError(
                f"dense weight {self.weight.shape} inconsistent with bias {self.bias.shape}"
            )

    @property
    def in_size(self) -> int:
        return self.weight.shape[1]

    @property
    def out_size(self) -> int:
        return self.weight.shape[0]

    @classmethod
    def init(cls, in_size: int, out_size: int, rng: np.random.Generator) -> DenseParams:
        return cls(_uniform(rng, (out_size, in_size), in_size), np.zeros(out_size))

    @classmethod
    def zeros(cls, in_size: int, out_size: int) -> DenseParams:
        return cls(np.zeros((out_size, in_size)), np.zeros(out_size))


@dataclass
class DenseCache:
    params: DenseParams
    x: Tensor
    pre: Tensor
    out: Tensor
    activation: Activation


def dense_forward_cached(
    params: DenseParams, x: ArrayLike, activation: Activation = Activation.IDENTITY
) -> Tuple[Tensor, DenseCache]:
    x = as_tensor(x, "dense input")
    check_last_dim(x, params.in_size, "dense input")
    pre = x @ params.weight.T + params.bias
    out = activate(pre, activation)
    return out, DenseCache(params, x, pre, out, Activation(activation))


def dense_forward(
    params: DenseParams, x: ArrayLike, activation: Activation = Activation.IDENTITY
) -> Tensor:
    """``activation(W x + b)``."""
    return dense_forward_cached(params, x, activation)[0]


def dense_backward(cache: DenseCache, upstream: ArrayLike) -> Tuple[DenseParams, Tensor]:
    upstream = as_tensor(upstream, "dense upstream")
    if upstream.shape != cache.out.shape:
        raise ShapeError(f"dense upstream {upstream.shape} != output {cache.out.shape}")
    d_pre = activation_backward(upstream, cache.pre, cache.out, cache.activation)
    grads = DenseParams(outer_sum(d_pre, cache.x), leading_sum(d_pre))
    return grads, d_pre @ cache.params.weight


# --------------------------------------------------------------------------- GRU


@dataclass
class GruLayerParams(ParamBundle):
    """Update (z), reset (r) and candidate (h) gate weights of one GRU layer."""
    W_z: Tensor  # [hidden, in]
    W_r: Tensor
    W_h: Tensor
    U_z: Tensor  # [hidden, hidden]
    U_r: Tensor
    U_h: Tensor
    b_z: Tensor  # [hidden]
    b_r: Tensor
    b_h: Tensor

    def __post_init__(self) -> None:
        for f in fields(self):
            setattr(self, f.name, as_tensor(getattr(self, f.name), f"gru {f.name}"))
        hidden, in_size = self.W_z.shape if self.W_z.ndim == 2 else (-1, -1)
        for name in ("W_z", "W_r", "W_h"):
            if getattr(self, name).shape != (hidden, in_size):
                raise ShapeError(f"gru {name} must be [{hidden}, {in_size}]")
        for name in ("U_z", "U_r", "U_h"):
            if getattr(self, name).shape != (hidden, hidden):
                raise ShapeError(f"gru {name} must be [{hidden}, {hidden}]")
        for name in ("b_z", "b_r", "b_h"):
            if getattr(self, name).shape != (hidden,):
                raise ShapeError(f"gru {name} must be [{hidden}]")

    @property
    def in_size(self) -> int:
        return self.W_z.shape[1]

    @property
    def hidden_size(self) -> int:
        return self.W_z.shape[0]

    @classmethod
    def init(cls, in_size: int, hidden_size: int, rng: np.random.Generator) -> GruLayerParams:
        """Uniform in +-1/sqrt(fan_in) per matrix, zero biases."""
        w = [_uniform(rng, (hidden_size, in_size), in_size) for _ in range(3)]
        u = [_uniform(rng, (hidden_size, hidden_size), hidden_size) for _ in range(3)]
        b = [np.zeros(hidden_size) for _ in range(3)]
        return cls(*w, *u, *b)

    @classmethod
    def zeros(cls, in_size: int, hidden_size: int) -> GruLayerParams:
        w = [np.zeros((hidden_size, in_size)) for _ in range(3)]
        u = [np.zeros((hidden_size, hidden_size)) for _ in range(3)]
        b = [np.zeros(hidden_size) for _ in range(3)]
        return cls(*w, *u, *b)


@dataclass
class GruCellCache:
    params: GruLayerParams
    x: Tensor
    h_prev: Tensor
    z: Tensor
    r: Tensor
    h_tilde: Tensor
    r_h: Tensor


def gru_cell_forward(
    params: GruLayerParams, x_t: ArrayLike, h_prev: ArrayLike
) -> Tuple[Tensor, GruCellCache]:
    """One GRU step; the reset gate multiplies ``h_prev`` before the recurrent product."""
    x_t = as_tensor(x_t, "gru input")
    h_prev = as_tensor(h_prev, "gru hidden state")
    check_last_dim(x_t, params.in_size, "gru input")
    check_last_dim(h_prev, params.hidden_size, "gru hidden state")
    if x_t.shape[:-1] != h_prev.shape[:-1]:
        raise ShapeError(f"gru batch shapes differ: {x_t.shape} vs {h_prev.shape}")

    z = sigmoid(x_t @ params.W_z.T + h_prev @ params.U_z.T + params.b_z)
    r = sigmoid(x_t @ params.W_r.T + h_prev @ params.U_r.T + params.b_r)
    r_h = r * h_prev
    h_tilde = np.tanh(x_t @ params.W_h.T + r_h @ params.U_h.T + params.b_h)
    h = z * h_prev + (1.0 - z) * h_tilde
    return h, GruCellCache(params, x_t, h_prev, z, r, h_tilde, r_h)


def gru_cell_backward(
    cache: GruCellCache, upstream: ArrayLike
) -> Tuple[GruLayerParams, Tensor, Tensor]:
    """Returns (parameter gradients, d x_t, d h_prev)."""
    dh = as_tensor(upstream, "gru upstream")
    if dh.shape != cache.h_prev.shape:
        raise ShapeError(f"gru upstream {dh.shape} != hidden state {cache.h_prev.shape}")
    p, z, r = cache.params, cache.z, cache.r

    d_z = dh * (cache.h_prev - cache.h_tilde)
    d_h_prev = dh * z
    d_a_h = dh * (1.0 - z) * (1.0 - cache.h_tilde ** 2)
    d_r_h = d_a_h @ p.U_h
    d_h_prev = d_h_prev + d_r_h * r
    d_a_r = d_r_h * cache.h_prev * r * (1.0 - r)
    d_a_z = d_z * z * (1.0 - z)

    grads = GruLayerParams(
        W_z=outer_sum(d_a_z, cache.x),
        W_r=outer_sum(d_a_r, cache.x),
        W_h=outer_sum(d_a_h, cache.x),
        U_z=outer_sum(d_a_z, cache.h_prev),
        U_r=outer_sum(d_a_r, cache.h_prev),
        U_h=outer_sum(d_a_h, cache.r_h),
        b_z=leading_sum(d_a_z),
        b_r=leading_sum(d_a_r),
        b_h=leading_sum(d_a_h),
    )
    d_x = d_a_z @ p.W_z + d_a_r @ p.W_r + d_a_h @ p.W_h
    d_h_prev = d_h_prev + d_a_z @ p.U_z + d_a_r @ p.U_r
    return grads, d_x, d_h_prev


@dataclass
class GruSequenceCache:
    params: GruLayerParams
    steps: List[GruCellCache] = field(default_factory=list)


def gru_sequence_forward_cached(
    params: GruLayerParams, xs: ArrayLike, h0: Optional[ArrayLike] = None
) -> Tuple[Tensor, GruSequenceCache]:
    xs = as_tensor(xs, "gru sequence")
    if xs.ndim < 2 or xs.shape[-2] < 1:
        raise ShapeError(f"gru sequence must be [..., T, in] with T >= 1, got {xs.shape}")
    check_last_dim(xs, params.in_size, "gru sequence")
    batch_shape = xs.shape[:-2]
    h = np.zeros(batch_shape + (params.hidden_size,)) if h0 is None else as_tensor(h0, "h0")

    cache = GruSequenceCache(params)
    outputs = []
    for t in range(xs.shape[-2]):
        h, step = gru_cell_forward(params, xs[..., t, :], h)
        cache.steps.append(step)
        outputs.append(h)
    return np.stack(outputs, axis=-2), cache


def gru_sequence_forward(
    params: GruLayerParams, xs: ArrayLike, h0: Optional[ArrayLike] = None
) -> Tensor:
    """Hidden states ``[..., T, hidden]`` chained left to right from ``h0`` (zeros by default)."""
    return gru_sequence_forward_cached(params, xs, h0)[0]


def gru_sequence_backward(
    cache: GruSequenceCache, upstream: ArrayLike
) -> Tuple[GruLayerParams, Tensor, Tensor]:
    """Backpropagation through time. Returns (parameter gradients, d xs, d h0)."""
    d_hs = as_tensor(upstream, "gru sequence upstream")
    steps = len(cache.steps)
    if d_hs.ndim < 2 or d_hs.shape[-2] != steps:
        raise ShapeError(f"gru sequence upstream {d_hs.shape} does not cover {steps} steps")

    grads = {k: np.zeros_like(v) for k, v in cache.params.tensors().items()}
    d_xs = [None] * steps
    d_h = np.zeros_like(d_hs[..., 0, :])
    for t in reversed(range(steps)):
        step_grads, d_x, d_h = gru_cell_backward(cache.steps[t], d_hs[..., t, :] + d_h)
        for name, value in step_grads.tensors().items():
            grads[name] += value
        d_xs[t] = d_x
    return cache.params.with_tensors(grads), np.stack(d_xs, axis=-2), d_h


# --------------------------------------------------------------------------- BiGRU


@dataclass
class BiGruParams(ParamBundle):
    """Forward and backward GRU branches sharing a hidden size."""
    fwd: GruLayerParams
    bwd: GruLayerParams

    def __post_init__(self) -> None:
        if (self.fwd.in_size, self.fwd.hidden_size) != (self.bwd.in_size, self.bwd.hidden_size):
            raise ShapeError("bigru branches must share input and hidden sizes")

    @property
    def in_size(self) -> int:
        return self.fwd.in_size

    @property
    def hidden_size(self) -> int:
        return self.fwd.hidden_size

    @classmethod
    def init(cls, in_size: int, hidden_size: int, rng: np.random.Generator) -> BiGruParams:
        return cls(
            GruLayerParams.init(in_size, hidden_size, rng),
            GruLayerParams.init(in_size, hidden_size, rng),
        )

    @classmethod
    def zeros(cls, in_size: int, hidden_size: int) -> BiGruParams:
        return cls(GruLayerParams.zeros(in_size, hidden_size), GruLayerParams.zeros(in_size, hidden_size))


@dataclass
class BiGruCache:
    fwd: GruSequenceCache
    bwd: GruSequenceCache


def bigru_forward_cached(params: BiGruParams, xs: ArrayLike) -> Tuple[Tensor, BiGruCache]:
    xs = as_tensor(xs, "bigru sequence")
    forward_hs, fwd_cache = gru_sequence_forward_cached(params.fwd, xs)
    reversed_hs, bwd_cache = gru_sequence_forward_cached(params.bwd, np.flip(xs, axis=-2))
    return forward_hs + np.flip(reversed_hs, axis=-2), BiGruCache(fwd_cache, bwd_cache)


def bigru_forward(fwd: GruLayerParams, bwd: GruLayerParams, xs: ArrayLike) -> Tensor:
    """Elementwise sum of the forward pass and the time-realigned reversed pass."""
    return bigru_forward_cached(BiGruParams(fwd, bwd), xs)[0]


def bigru_backward(cache: BiGruCache, upstream: ArrayLike) -> Tuple[BiGruParams, Tensor]:
    d_y = as_tensor(upstream, "bigru upstream")
    fwd_grads, d_xs_fwd, _ = gru_sequence_backward(cache.fwd, d_y)
    bwd_grads, d_xs_rev, _ = gru_sequence_backward(cache.bwd, np.flip(d_y, axis=-2))
    return BiGruParams(fwd_grads, bwd_grads), d_xs_fwd + np.flip(d_xs_rev, axis=-2)


# --------------------------------------------------------------------------- attention


@dataclass
class AttentionParams(ParamBundle):
    """Additive attention: scores ``w . tanh(W_h h_i)``."""
    W_h: Tensor  # [attn, hidden]
    w: Tensor  # [attn]

    def __post_init__(self) -> None:
        self.W_h = as_tensor(self.W_h, "attention W_h")
        self.w = as_tensor(self.w, "attention w")
        if self.W_h.ndim != 2 or self.w.shape != (self.W_h.shape[0],):
            raise ShapeError(f"attention W_h {self.W_h.shape} inconsistent with w {self.w.shape}")

    @property
    def hidden_size(self) -> int:
        return self.W_h.shape[1]

    @property
    def attn_size(self) -> int:
        return self.W_h.shape[0]

    @classmethod
    def init(cls, hidden_size: int, attn_size: int, rng: np.random.Generator) -> AttentionParams:
        return cls(
            _uniform(rng, (attn_size, hidden_size), hidden_size),
            _uniform(rng, (attn_size,), attn_size),
        )

    @classmethod
    def zeros(cls, hidden_size: int, attn_size: int) -> AttentionParams:
        return cls(np.zeros((attn_size, hidden_size)), np.zeros(attn_size))


@dataclass
class AttentionCache:
    params: AttentionParams
    hs: Tensor
    e: Tensor
    alphas: Tensor


def attention_forward(
    params: AttentionParams, hs: ArrayLike
) -> Tuple[Tensor, Tensor, AttentionCache]:
    """Returns the context vector ``c``, the weights ``alphas`` and the cache."""
    hs = as_tensor(hs, "attention input")
    if hs.ndim < 2 or hs.shape[-2] < 1:
        raise ShapeError(f"attention input must be [..., T, hidden] with T >= 1, got {hs.shape}")
    check_last_dim(hs, params.hidden_size, "attention input")
    e = np.tanh(hs @ params.W_h.T)
    alphas = softmax(e @ params.w)
    c = np.einsum("...t,...th->...h", alphas, hs)
    return c, alphas, AttentionCache(params, hs, e, alphas)


def attention_backward(
    cache: AttentionCache, d_c: ArrayLike, d_alphas: Optional[ArrayLike] = None
) -> Tuple[AttentionParams, Tensor]:
    """Returns (parameter gradients, d hs)."""
    d_c = as_tensor(d_c, "attention upstream")
    expected = cache.hs.shape[:-2] + cache.hs.shape[-1:]
    if d_c.shape != expected:
        raise ShapeError(f"attention upstream {d_c.shape} != context shape {expected}")
    alphas = cache.alphas

    d_a = np.einsum("...h,...th->...t", d_c, cache.hs)
    if d_alphas is not None:
        d_a = d_a + as_tensor(d_alphas, "attention alpha upstream")
    d_hs = alphas[..., :, None] * d_c[..., None, :]

    d_scores = softmax_backward(d_a, alphas)
    d_w = outer_sum(d_scores[..., None], cache.e)[0]
    d_pre = d_scores[..., None] * cache.params.w * (1.0 - cache.e ** 2)
    d_W_h = outer_sum(d_pre, cache.hs)
    d_hs = d_hs + d_pre @ cache.params.W_h
    return AttentionParams(d_W_h, d_w), d_hs
