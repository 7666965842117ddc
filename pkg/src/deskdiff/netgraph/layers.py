"""Building blocks for the denoiser: affine maps, sinusoidal time features
and single-head cross-attention over condition tokens."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, add, as_tensor, matmul, mul, reshape, silu, softmax, transpose_last

__all__ = ["dense_forward", "silu", "time_embedding", "cross_attention", "glorot_uniform"]

TIME_EMBED_BASE = 1e4


def dense_forward(input, weight, bias) -> Tensor:
    """Affine map ``input @ weight + bias`` with ``weight`` of shape (fan_in, fan_out)."""
    input, weight, bias = as_tensor(input), as_tensor(weight), as_tensor(bias)
    x = input if input.ndim >= 2 else reshape(input, (1, -1))
    if x.shape[-1] != weight.shape[0]:
        raise ValueError(f"dense input width {x.shape[-1]} != weight fan-in {weight.shape[0]}")
    if bias.shape[-1] != weight.shape[1]:
        raise ValueError(f"bias width {bias.shape[-1]} != weight fan-out {weight.shape[1]}")
    out = add(matmul(x, weight), bias)
    if input.ndim < 2:
        out = reshape(out, (weight.shape[1],))
    return out


def time_frequencies(dim: int, base: float = TIME_EMBED_BASE) -> np.ndarray:
    """Log-spaced angular frequencies ``base ** (-k / half)`` for ``k < half``."""
    if dim <= 0 or dim % 2:
        raise ValueError(f"time embedding width must be even and positive, got {dim}")
    half = dim // 2
    return base ** (-np.arange(half, dtype=np.float64) / half)


def time_embedding(t, dim: int, T: int | None = None, base: float = TIME_EMBED_BASE) -> np.ndarray:
    """Sinusoidal features ``[sin(t w_k)..., cos(t w_k)...]``.

    ``t`` is a step index or an array of them; the result has shape
    ``(dim,)`` or ``(len(t), dim)``. ``T`` is accepted for interface
    symmetry and only used to range-check ``t``.
    """
    freqs = time_frequencies(dim, base)
    t_arr = np.asarray(t, dtype=np.float64)
    if T is not None and np.any((t_arr < 0) | (t_arr > T)):
        raise ValueError(f"time step outside [0, {T}]")
    angles = t_arr[..., None] * freqs
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=-1)


def cross_attention(hidden, cond_tokens, w_query=None, w_key=None, w_value=None,
                    return_weights: bool = False):
    """Single-head attention of one query per row over condition tokens.

    ``hidden`` is (B, w) and ``cond_tokens`` is (B, m, w_c). Queries, keys
    and values are the projections by ``w_query`` (w, w), ``w_key`` and
    ``w_value`` (w_c, w); omitted projections are identity, in which case
    ``w_c`` must equal ``w``. Returns ``hidden + softmax(q k^T / sqrt(w)) v``,
    plus the (B, 1, m) attention weights when ``return_weights`` is set.
    """
    hidden, cond_tokens = as_tensor(hidden), as_tensor(cond_tokens)
    if hidden.ndim != 2 or cond_tokens.ndim != 3:
        raise ValueError("expected hidden (B, w) and cond_tokens (B, m, w_c)")
    B, w = hidden.shape
    if cond_tokens.shape[0] != B:
        raise ValueError("hidden and cond_tokens disagree on batch size")
    q = hidden if w_query is None else matmul(hidden, w_query)
    k = cond_tokens if w_key is None else matmul(cond_tokens, w_key)
    v = cond_tokens if w_value is None else matmul(cond_tokens, w_value)
    if q.shape[-1] != k.shape[-1] or v.shape[-1] != w:
        raise ValueError(
            f"width mismatch after projection: query {q.shape[-1]}, key {k.shape[-1]}, "
            f"value {v.shape[-1]}, hidden {w}")
    q3 = reshape(q, (B, 1, q.shape[-1]))
    logits = mul(matmul(q3, transpose_last(k)), 1.0 / np.sqrt(q.shape[-1]))
    weights = softmax(logits)
    attended = reshape(matmul(weights, v), (B, w))
    out = add(hidden, attended)
    if return_weights:
        return out, weights.value
    return out


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_in, fan_out))
