"""Discrete condition channels, their fusion and the null token.

Two channels are supported: a class channel (the stand-in for a text
prompt) and a style channel (the stand-in for a reference sketch). Each has
a learned embedding table plus a learned channel-null row used when that
channel is absent; a separate global null token replaces the fused vector
when the whole condition is dropped.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .netgraph.layers import dense_forward, glorot_uniform
from .netgraph.tensor import Tensor, add, concat, mul, reshape, take_rows

FUSION_MODES = ("concat", "sum", "project")
DEFAULT_DROP_PROB = 0.1


def fused_width(fusion: str, embed_dim: int, cond_dim: int | None = None) -> int:
    """Width of the fused vector implied by the fusion mode."""
    if fusion == "concat":
        return 2 * embed_dim
    if fusion == "sum":
        return embed_dim
    if fusion == "project":
        if not cond_dim or cond_dim < 1:
            raise ValueError("project fusion needs a positive cond_dim")
        return cond_dim
    raise ValueError(f"unknown fusion mode {fusion!r}; expected one of {FUSION_MODES}")


@dataclass(frozen=True)
class ConditionVocab:
    """Declared condition vocabularies with optional label names."""

    n_classes: int = 1
    n_styles: int = 1
    class_names: tuple = ()
    style_names: tuple = ()

    def __post_init__(self):
        if self.n_classes < 1 or self.n_styles < 1:
            raise ValueError("vocabularies need at least one entry per channel")
        if self.class_names and len(self.class_names) != self.n_classes:
            raise ValueError("class_names length must equal n_classes")
        if self.style_names and len(self.style_names) != self.n_styles:
            raise ValueError("style_names length must equal n_styles")

    def class_id(self, token) -> int:
        return _resolve(token, self.n_classes, self.class_names, "class")

    def style_id(self, token) -> int:
        return _resolve(token, self.n_styles, self.style_names, "style")


def _resolve(token, n: int, names: tuple, channel: str) -> int:
    if isinstance(token, str):
        if token in names:
            return names.index(token)
        try:
            token = int(token)
        except ValueError:
            raise ValueError(f"unknown {channel} name {token!r}") from None
    token = int(token)
    if not 0 <= token < n:
        raise ValueError(f"{channel} id {token} outside [0, {n})")
    return token


@dataclass(frozen=True)
class CondBatch:
    """Per-row condition ids; ``-1`` marks a missing channel.

    ``null`` rows use the global null token regardless of their ids.
    """

    class_ids: np.ndarray
    style_ids: np.ndarray
    null: np.ndarray

    def __len__(self):
        return int(self.null.shape[0])

    @classmethod
    def make(cls, n: int, class_ids=None, style_ids=None) -> "CondBatch":
        c = _ids(class_ids, n)
        s = _ids(style_ids, n)
        return cls(c, s, (c < 0) & (s < 0))

    @classmethod
    def null_batch(cls, n: int) -> "CondBatch":
        return cls.make(n)

    def nulled(self, mask=None) -> "CondBatch":
        """Copy with ``mask`` rows (all rows by default) nulled jointly."""
        mask = np.ones(len(self), bool) if mask is None else np.asarray(mask, bool)
        return CondBatch(np.where(mask, -1, self.class_ids),
                         np.where(mask, -1, self.style_ids), self.null | mask)

    def take(self, idx) -> "CondBatch":
        return CondBatch(self.class_ids[idx], self.style_ids[idx], self.null[idx])


def _ids(ids, n: int) -> np.ndarray:
    if ids is None:
        return np.full(n, -1, dtype=np.int64)
    arr = np.asarray(ids, dtype=np.int64)
    if arr.ndim == 0:
        return np.full(n, int(arr), dtype=np.int64)
    if arr.shape != (n,):
        raise ValueError(f"expected {n} condition ids, got shape {arr.shape}")
    return arr.copy()


@dataclass
class ConditionEmbedding:
    class_id: int | None
    style_id: int | None
    fused: Tensor
    is_null: bool = False

    def as_batch(self, n: int) -> CondBatch:
        cb = CondBatch.make(n, self.class_id, self.style_id)
        return cb.nulled() if self.is_null else cb


@dataclass
class ConditionTables:
    """View over the ``cond.*`` entries of a parameter store."""

    params: dict
    n_classes: int
    n_styles: int
    embed_dim: int
    fusion: str = "project"
    cond_dim: int = field(default=0)

    def __post_init__(self):
        self.cond_dim = fused_width(self.fusion, self.embed_dim, self.cond_dim)

    @staticmethod
    def init_params(rng: np.random.Generator, n_classes: int, n_styles: int, embed_dim: int,
                    fusion: str, cond_dim: int | None = None) -> dict:
        width = fused_width(fusion, embed_dim, cond_dim)
        arrays = {
            "cond.class_table": glorot_uniform(rng, n_classes, embed_dim),
            "cond.class_null": glorot_uniform(rng, 1, embed_dim),
            "cond.style_table": glorot_uniform(rng, n_styles, embed_dim),
            "cond.style_null": glorot_uniform(rng, 1, embed_dim),
            "cond.null": glorot_uniform(rng, 1, width),
        }
        if fusion == "project":
            arrays["cond.fuse_w"] = glorot_uniform(rng, 2 * embed_dim, width)
            arrays["cond.fuse_b"] = np.zeros((1, width))
        return arrays

    def p(self, name: str) -> Tensor:
        return self.params["cond." + name]

    def fuse(self, class_emb, style_emb) -> Tensor:
        if self.fusion == "project":
            return fuse(class_emb, style_emb, "project", self.p("fuse_w"), self.p("fuse_b"))
        return fuse(class_emb, style_emb, self.fusion)


def fuse(class_emb, style_emb, mode: str = "concat", weight=None, bias=None) -> Tensor:
    """Combine the two channel embeddings.

    ``concat`` joins along the last axis, ``sum`` adds equal-width vectors and
    ``project`` applies a learned affine map (``weight``, ``bias``) to the
    concatenation.
    """
    if mode == "concat":
        return concat([class_emb, style_emb], axis=-1)
    if mode == "sum":
        a, b = np.shape(_val(class_emb)), np.shape(_val(style_emb))
        if a[-1] != b[-1]:
            raise ValueError(f"sum fusion needs equal widths, got {a[-1]} and {b[-1]}")
        return add(class_emb, style_emb)
    if mode == "project":
        if weight is None or bias is None:
            raise ValueError("project fusion needs weight and bias")
        joined = concat([class_emb, style_emb], axis=-1)
        return dense_forward(joined, weight, bias)
    raise ValueError(f"unknown fusion mode {mode!r}")


def _val(x):
    return x.value if isinstance(x, Tensor) else x


def embed_batch(cond: CondBatch, tables: ConditionTables) -> Tensor:
    """Fused conditioning vectors, one row per batch entry (differentiable)."""
    n = len(cond)
    for ids, size, channel in ((cond.class_ids, tables.n_classes, "class"),
                               (cond.style_ids, tables.n_styles, "style")):
        if ids.size and (ids.max() >= size or ids.min() < -1):
            raise ValueError(f"unknown {channel} id; vocabulary has {size} entries")
    if cond.null.all():
        return take_rows(tables.p("null"), np.zeros(n, dtype=np.int64))
    class_rows = concat([tables.p("class_table"), tables.p("class_null")], axis=0)
    style_rows = concat([tables.p("style_table"), tables.p("style_null")], axis=0)
    c = take_rows(class_rows, np.where(cond.class_ids < 0, tables.n_classes, cond.class_ids))
    s = take_rows(style_rows, np.where(cond.style_ids < 0, tables.n_styles, cond.style_ids))
    fused = tables.fuse(c, s)
    if not cond.null.any():
        return fused
    m = cond.null.astype(np.float64)[:, None]
    return add(mul(fused, 1.0 - m), mul(tables.p("null"), m))


def embed(class_id, style_id, tables: ConditionTables) -> ConditionEmbedding:
    """Look up and fuse a single condition.

    A missing channel contributes its channel-null row; with both channels
    missing the result is the global null token.
    """
    if class_id is not None and not 0 <= int(class_id) < tables.n_classes:
        raise ValueError(f"class id {class_id} outside [0, {tables.n_classes})")
    if style_id is not None and not 0 <= int(style_id) < tables.n_styles:
        raise ValueError(f"style id {style_id} outside [0, {tables.n_styles})")
    cb = CondBatch.make(1, class_id, style_id)
    fused = reshape(embed_batch(cb, tables), (tables.cond_dim,))
    return ConditionEmbedding(class_id, style_id, fused, bool(cb.null[0]))


def null_embedding(tables: ConditionTables) -> ConditionEmbedding:
    return embed(None, None, tables)


def drop_condition(cond: ConditionEmbedding, p: float, rng: np.random.Generator,
                   tables: ConditionTables) -> ConditionEmbedding:
    """Replace ``cond`` by the null embedding with probability ``p``.

    Consumes exactly one uniform draw from ``rng``.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"drop probability must lie in [0, 1], got {p}")
    u = rng.random()
    if u < p:
        return null_embedding(tables)
    return cond


def drop_conditions(cond: CondBatch, p: float, rng: np.random.Generator) -> CondBatch:
    """Row-wise condition dropout; one uniform per row, both channels nulled."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"drop probability must lie in [0, 1], got {p}")
    return cond.nulled(rng.random(len(cond)) < p)
