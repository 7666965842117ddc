"""The noise-prediction network.

A dense analogue of a U-Net: an encoder stack whose activations are
concatenated into a mirrored decoder (long skips), a sinusoidal time
embedding projected into every hidden layer, and cross-attention from the
bottleneck activation to condition tokens derived from the fused condition.

Layer layout for ``hidden_widths = (w1, ..., wL)`` and data width ``d``::

    enc1: d -> w1, ..., encL: w(L-1) -> wL           (+ time projection)
    attn: bottleneck queries m condition tokens of width wL
    decL: [h, encL] (2 wL) -> w(L-1), ..., dec2: [h, enc2] (2 w2) -> w1
    out:  [h, enc1] (2 w1) -> d                      (linear)
"""

from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field

import numpy as np

from ..conditioning import (CondBatch, ConditionEmbedding, ConditionTables, embed_batch,
                            fused_width)
from .layers import cross_attention, dense_forward, glorot_uniform, time_embedding
from .tensor import Tensor, add, as_tensor, concat, matmul, no_grad, reshape, silu


@dataclass(frozen=True)
class DenoiserConfig:
    data_dim: int
    hidden_widths: tuple = (64, 64)
    time_embed_dim: int = 16
    n_classes: int = 1
    n_styles: int = 1
    cond_embed_dim: int = 8
    cond_dim: int = 16
    fusion: str = "project"
    n_cond_tokens: int = 2
    time_embed_base: float = 1e4

    def __post_init__(self):
        object.__setattr__(self, "hidden_widths", tuple(int(w) for w in self.hidden_widths))
        if self.data_dim < 1:
            raise ValueError("data_dim must be positive")
        if not self.hidden_widths or min(self.hidden_widths) < 1:
            raise ValueError("need at least one positive hidden width")
        if self.time_embed_dim < 2 or self.time_embed_dim % 2:
            raise ValueError("time_embed_dim must be even and >= 2")
        if self.n_cond_tokens < 1:
            raise ValueError("n_cond_tokens must be positive")
        # concat / sum fix the fused width; keep the stored value consistent
        object.__setattr__(self, "cond_dim",
                           fused_width(self.fusion, self.cond_embed_dim, self.cond_dim))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden_widths"] = list(self.hidden_widths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DenoiserConfig":
        return cls(**d)


@dataclass
class DenoiserModel:
    config: DenoiserConfig
    params: dict = field(default_factory=dict)

    @classmethod
    def init(cls, config: DenoiserConfig, rng: np.random.Generator) -> "DenoiserModel":
        arrays = {}
        widths = config.hidden_widths
        temb = config.time_embed_dim
        fan_in = config.data_dim
        for i, w in enumerate(widths, start=1):
            arrays[f"enc{i}.w"] = glorot_uniform(rng, fan_in, w)
            arrays[f"enc{i}.b"] = np.zeros((1, w))
            arrays[f"enc{i}.time"] = glorot_uniform(rng, temb, w)
            fan_in = w
        wl = widths[-1]
        m = config.n_cond_tokens
        arrays["tok.w"] = glorot_uniform(rng, config.cond_dim, m * wl)
        arrays["tok.b"] = np.zeros((1, m * wl))
        for name in ("attn.q", "attn.k", "attn.v"):
            arrays[name] = glorot_uniform(rng, wl, wl)
        for i in range(len(widths), 1, -1):
            w_in, w_out = 2 * widths[i - 1], widths[i - 2]
            arrays[f"dec{i}.w"] = glorot_uniform(rng, w_in, w_out)
            arrays[f"dec{i}.b"] = np.zeros((1, w_out))
            arrays[f"dec{i}.time"] = glorot_uniform(rng, temb, w_out)
        arrays["out.w"] = glorot_uniform(rng, 2 * widths[0], config.data_dim)
        arrays["out.b"] = np.zeros((1, config.data_dim))
        arrays.update(ConditionTables.init_params(
            rng, config.n_classes, config.n_styles, config.cond_embed_dim,
            config.fusion, config.cond_dim))
        return cls.from_arrays(config, arrays)

    @classmethod
    def from_arrays(cls, config: DenoiserConfig, arrays: dict) -> "DenoiserModel":
        params = {k: Tensor(np.array(v, dtype=np.float64), requires_grad=True, name=k)
                  for k, v in arrays.items()}
        return cls(config, params)

    @property
    def cond_tables(self) -> ConditionTables:
        c = self.config
        return ConditionTables(self.params, c.n_classes, c.n_styles, c.cond_embed_dim,
                               c.fusion, c.cond_dim)

    def arrays(self) -> dict:
        return {k: t.value for k, t in self.params.items()}

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.grad = None

    def copy(self) -> "DenoiserModel":
        return DenoiserModel.from_arrays(self.config, copy.deepcopy(self.arrays()))

    def num_parameters(self) -> int:
        return sum(t.value.size for t in self.params.values())

    def predict(self, xt, t, cond=None) -> np.ndarray:
        """Noise prediction as a plain array, without recording a graph."""
        with no_grad():
            return denoiser_forward(self, xt, t, cond).value


def _cond_batch(cond, n: int) -> CondBatch:
    if cond is None:
        return CondBatch.null_batch(n)
    if isinstance(cond, ConditionEmbedding):
        return cond.as_batch(n)
    if isinstance(cond, CondBatch):
        if len(cond) != n:
            raise ValueError(f"condition batch has {len(cond)} rows, input has {n}")
        return cond
    raise TypeError(f"unsupported condition type {type(cond).__name__}")


def _steps(t, n: int) -> np.ndarray:
    arr = np.asarray(t)
    if arr.ndim == 0:
        return np.full(n, int(arr), dtype=np.int64)
    if arr.shape != (n,):
        raise ValueError(f"expected {n} step indices, got shape {arr.shape}")
    return arr.astype(np.int64)


def denoiser_forward(model: DenoiserModel, xt, t, cond=None, hooks: dict | None = None) -> Tensor:
    """Predict the injected noise for ``xt`` at step(s) ``t`` under ``cond``.

    ``cond`` may be ``None`` (unconditional / null), a ``ConditionEmbedding``
    broadcast over rows, or a per-row ``CondBatch``. ``hooks``, when given,
    receives the encoder activations and attention weights for inspection.
    """
    cfg = model.config
    p = model.params
    x = as_tensor(xt)
    squeeze = x.ndim == 1
    if squeeze:
        x = reshape(x, (1, -1))
    if x.ndim != 2 or x.shape[1] != cfg.data_dim:
        raise ValueError(f"expected input of width {cfg.data_dim}, got shape {x.shape}")
    n = x.shape[0]
    steps = _steps(t, n)
    temb = time_embedding(steps, cfg.time_embed_dim, base=cfg.time_embed_base)
    fused = embed_batch(_cond_batch(cond, n), model.cond_tables)

    skips = []
    h = x
    for i in range(1, len(cfg.hidden_widths) + 1):
        pre = add(dense_forward(h, p[f"enc{i}.w"], p[f"enc{i}.b"]), matmul(temb, p[f"enc{i}.time"]))
        h = silu(pre)
        skips.append(h)

    wl = cfg.hidden_widths[-1]
    tokens = reshape(dense_forward(fused, p["tok.w"], p["tok.b"]), (n, cfg.n_cond_tokens, wl))
    h, weights = cross_attention(h, tokens, p["attn.q"], p["attn.k"], p["attn.v"],
                                 return_weights=True)

    for i in range(len(cfg.hidden_widths), 1, -1):
        joined = concat([h, skips[i - 1]], axis=-1)
        pre = add(dense_forward(joined, p[f"dec{i}.w"], p[f"dec{i}.b"]), matmul(temb, p[f"dec{i}.time"]))
        h = silu(pre)
    out = dense_forward(concat([h, skips[0]], axis=-1), p["out.w"], p["out.b"])

    if hooks is not None:
        hooks["encoder"] = [s.value for s in skips]
        hooks["attention"] = weights
    if squeeze:
        out = reshape(out, (cfg.data_dim,))
    return out
