"""A small reverse-mode automatic differentiation engine over numpy arrays.

Each operation returns a new :class:`Tensor` holding its parents and a
closure that maps the output gradient to parent gradients. ``backward``
walks the recorded graph once in reverse topological order.
"""

from __future__ import annotations

import contextlib

import numpy as np

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (inference only)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class GraphConsumedError(RuntimeError):
    pass


class Tensor:
    """Dense float64 array with an optional gradient slot.

    Leaves created with ``requires_grad=True`` are parameters: ``backward``
    accumulates into their ``grad``. Interior nodes keep a backward closure
    until the graph is consumed.
    """

    __slots__ = ("value", "grad", "requires_grad", "name", "_parents",
                 "_backward", "_consumed")

    def __init__(self, value, requires_grad: bool = False, name: str | None = None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents = ()
        self._backward = None
        self._consumed = False

    @property
    def shape(self) -> tuple:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def zero_grad(self) -> None:
        self.grad = None

    def numpy(self) -> np.ndarray:
        return self.value

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(value, parents, backward) -> Tensor:
    out = Tensor(value)
    if _grad_enabled:
        live = tuple(p for p in parents if p.requires_grad or p._backward is not None)
        if live:
            out._parents = parents
            out._backward = backward
    return out


def _tracked(t: Tensor) -> bool:
    return t.requires_grad or t._backward is not None


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not _tracked(t):
        return
    if g.shape != t.value.shape:
        g = _unbroadcast(g, t.value.shape)
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64, copy=True)
    else:
        t.grad = t.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# --- elementwise arithmetic ----------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        _accumulate(a, g)
        _accumulate(b, g)

    return _make(a.value + b.value, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        _accumulate(a, g)
        _accumulate(b, -g)

    return _make(a.value - b.value, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        _accumulate(a, g * b.value)
        _accumulate(b, g * a.value)

    return _make(a.value * b.value, (a, b), backward)


def square(a: Tensor) -> Tensor:
    def backward(g):
        _accumulate(a, 2.0 * a.value * g)

    return _make(a.value * a.value, (a,), backward)


# Test hook: anything other than 1.0 deliberately corrupts the SiLU gradient.
_silu_grad_scale = 1.0


def silu(a) -> Tensor:
    """``x * sigmoid(x)`` elementwise."""
    a = as_tensor(a)
    x = a.value
    sig = _sigmoid(x)

    def backward(g):
        _accumulate(a, _silu_grad_scale * g * sig * (1.0 + x * (1.0 - sig)))

    return _make(x * sig, (a,), backward)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


# --- linear algebra and shape ---------------------------------------------

def matmul(a, b) -> Tensor:
    """``np.matmul`` semantics, including batched leading axes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul operands must be at least 2-D")
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"inner dimensions disagree: {a.shape} @ {b.shape}")

    def backward(g):
        if _tracked(a):
            _accumulate(a, np.matmul(g, np.swapaxes(b.value, -1, -2)))
        if _tracked(b):
            _accumulate(b, np.matmul(np.swapaxes(a.value, -1, -2), g))

    return _make(np.matmul(a.value, b.value), (a, b), backward)


def transpose_last(a: Tensor) -> Tensor:
    def backward(g):
        _accumulate(a, np.swapaxes(g, -1, -2))

    return _make(np.swapaxes(a.value, -1, -2), (a,), backward)


def reshape(a: Tensor, shape: tuple) -> Tensor:
    def backward(g):
        _accumulate(a, g.reshape(a.shape))

    return _make(a.value.reshape(shape), (a,), backward)


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        for t, part in zip(tensors, np.split(g, splits, axis=axis)):
            _accumulate(t, part)

    return _make(np.concatenate([t.value for t in tensors], axis=axis),
                 tuple(tensors), backward)


def take_rows(table: Tensor, idx) -> Tensor:
    """Row lookup ``table[idx]`` with scatter-add gradient (embedding lookup)."""
    idx = np.asarray(idx, dtype=np.int64)
    n = table.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise IndexError(f"row index out of range for table with {n} rows")

    def backward(g):
        full = np.zeros_like(table.value)
        np.add.at(full, idx, g)
        _accumulate(table, full)

    return _make(table.value[idx], (table,), backward)


# --- reductions and normalisation -----------------------------------------

def sum_all(a: Tensor) -> Tensor:
    def backward(g):
        _accumulate(a, np.broadcast_to(g, a.shape))

    return _make(np.sum(a.value), (a,), backward)


def mean_all(a: Tensor) -> Tensor:
    n = a.value.size

    def backward(g):
        _accumulate(a, np.broadcast_to(g / n, a.shape))

    return _make(np.mean(a.value), (a,), backward)


def softmax(a: Tensor) -> Tensor:
    """Softmax over the last axis."""
    z = a.value - a.value.max(axis=-1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        _accumulate(a, p * (g - (g * p).sum(axis=-1, keepdims=True)))

    return _make(p, (a,), backward)


# --- driver ----------------------------------------------------------------

def backward(loss_root: Tensor) -> dict:
    """Reverse-mode pass from a scalar root.

    Fills ``grad`` of every parameter leaf reachable from ``loss_root``
    (accumulating across multiple uses) and returns ``{name: grad}`` for the
    named leaves reached. The recorded graph is released afterwards; calling
    again on the same root raises :class:`GraphConsumedError`.
    """
    if loss_root.value.size != 1:
        raise ValueError(f"backward needs a scalar root, got shape {loss_root.shape}")
    if loss_root._consumed:
        raise GraphConsumedError("graph already consumed by a previous backward call")

    order = []
    seen = set()
    stack = [(loss_root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen and _tracked(p):
                stack.append((p, False))

    loss_root.grad = np.ones_like(loss_root.value)
    for node in reversed(order):
        if node._backward is None or node.grad is None:
            continue
        node._backward(node.grad)
        if not node.requires_grad:
            node.grad = None
    for node in order:
        node._backward = None
        node._parents = ()
    loss_root._consumed = True
    return {t.name: t.grad for t in order
            if t.requires_grad and t.name is not None and t.grad is not None}
