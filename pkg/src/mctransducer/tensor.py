"""Dense float64 arrays with reverse-mode differentiation.

A Tensor wraps a numpy array plus an optional gradient and a backward
closure.  Calling ``backward()`` on a scalar result walks the recorded
graph in reverse topological order and accumulates gradients into every
reachable tensor created with ``requires_grad=True``.  Gradients add up
across consumers; clearing them between steps is the caller's job
(see ``zero_grads``).
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np


class Tensor:
    """A node in the computation graph.

    Leaf tensors hold data (and optionally receive gradients); interior
    tensors additionally carry the closure that routes upstream gradients
    to their parents.
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "_backward", "_parents")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._backward = None
        self._parents: tuple[Tensor, ...] = ()

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        grad = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{grad}{tag})"

    def item(self) -> float:
        return float(self.data)

    def accumulate_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self, grad: np.ndarray | None = None) -> None:
        """Run reverse-mode accumulation from this tensor.

        Without an explicit seed the tensor must be scalar (size 1).
        """
        if grad is None:
            if self.data.size != 1:
                raise ValueError(
                    f"backward() without a seed requires a scalar root, got shape {self.data.shape}"
                )
            grad = np.ones_like(self.data)
        self.accumulate_grad(np.asarray(grad, dtype=np.float64))

        for node in reversed(_toposort(self)):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # Operator sugar; the module-level functions do the work.
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self) -> "Tensor":
        return sum_all(self)


def _toposort(root: Tensor) -> list[Tensor]:
    # Iterative DFS; deep graphs would blow the recursion limit.
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))
    return order


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _needs_graph(*tensors: Tensor) -> bool:
    return any(t.requires_grad or t._parents for t in tensors)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient back down to the shape it was broadcast from."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def zero_grads(params: Iterable[Tensor]) -> None:
    """Drop accumulated gradients; accumulation restarts at the next backward."""
    for p in params:
        p.grad = None


# ---------------------------------------------------------------------------
# elementwise and structural operations
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data + b.data)
    if _needs_graph(a, b):
        out._parents = (a, b)

        def _bw(g):
            if a.requires_grad or a._parents:
                a.accumulate_grad(_unbroadcast(g, a.shape))
            if b.requires_grad or b._parents:
                b.accumulate_grad(_unbroadcast(g, b.shape))

        out._backward = _bw
    return out


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data - b.data)
    if _needs_graph(a, b):
        out._parents = (a, b)

        def _bw(g):
            if a.requires_grad or a._parents:
                a.accumulate_grad(_unbroadcast(g, a.shape))
            if b.requires_grad or b._parents:
                b.accumulate_grad(_unbroadcast(-g, b.shape))

        out._backward = _bw
    return out


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data * b.data)
    if _needs_graph(a, b):
        out._parents = (a, b)

        def _bw(g):
            if a.requires_grad or a._parents:
                a.accumulate_grad(_unbroadcast(g * b.data, a.shape))
            if b.requires_grad or b._parents:
                b.accumulate_grad(_unbroadcast(g * a.data, b.shape))

        out._backward = _bw
    return out


def matmul(a, b) -> Tensor:
    """Matrix product with numpy broadcasting over leading axes."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError(f"matmul expects matrices, got shapes {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul inner dimensions disagree: {a.shape} vs {b.shape}")
    out = Tensor(a.data @ b.data)
    if _needs_graph(a, b):
        out._parents = (a, b)

        def _bw(g):
            if a.requires_grad or a._parents:
                a.accumulate_grad(_unbroadcast(g @ b.data.swapaxes(-1, -2), a.shape))
            if b.requires_grad or b._parents:
                b.accumulate_grad(_unbroadcast(a.data.swapaxes(-1, -2) @ g, b.shape))

        out._backward = _bw
    return out


def tanh(x) -> Tensor:
    x = _as_tensor(x)
    y = np.tanh(x.data)
    out = Tensor(y)
    if _needs_graph(x):
        out._parents = (x,)
        out._backward = lambda g: x.accumulate_grad(g * (1.0 - y * y))
    return out


def relu(x) -> Tensor:
    x = _as_tensor(x)
    out = Tensor(np.maximum(x.data, 0.0))
    if _needs_graph(x):
        out._parents = (x,)
        out._backward = lambda g: x.accumulate_grad(g * (x.data > 0.0))
    return out


def concat(xs: Sequence, axis: int = -1) -> Tensor:
    """Concatenate along an axis (last by default)."""
    ts = [_as_tensor(x) for x in xs]
    out = Tensor(np.concatenate([t.data for t in ts], axis=axis))
    if _needs_graph(*ts):
        out._parents = tuple(ts)
        splits = np.cumsum([t.data.shape[axis] for t in ts])[:-1]

        def _bw(g):
            for t, piece in zip(ts, np.split(g, splits, axis=axis)):
                if t.requires_grad or t._parents:
                    t.accumulate_grad(piece)

        out._backward = _bw
    return out


def mean_axis(x, axis: int) -> Tensor:
    x = _as_tensor(x)
    n = x.data.shape[axis]
    out = Tensor(x.data.mean(axis=axis))
    if _needs_graph(x):
        out._parents = (x,)

        def _bw(g):
            x.accumulate_grad(np.broadcast_to(np.expand_dims(g, axis) / n, x.shape).copy())

        out._backward = _bw
    return out


def sum_all(x) -> Tensor:
    x = _as_tensor(x)
    out = Tensor(x.data.sum())
    if _needs_graph(x):
        out._parents = (x,)
        out._backward = lambda g: x.accumulate_grad(np.broadcast_to(g, x.shape).copy())
    return out


def reshape(x, shape: tuple[int, ...]) -> Tensor:
    x = _as_tensor(x)
    out = Tensor(x.data.reshape(shape))
    if _needs_graph(x):
        out._parents = (x,)
        out._backward = lambda g: x.accumulate_grad(g.reshape(x.shape))
    return out


def transpose_last2(x) -> Tensor:
    x = _as_tensor(x)
    out = Tensor(x.data.swapaxes(-1, -2))
    if _needs_graph(x):
        out._parents = (x,)
        out._backward = lambda g: x.accumulate_grad(g.swapaxes(-1, -2))
    return out


def embedding(table, ids) -> Tensor:
    """Row lookup into ``table``; gradients scatter-add back onto the rows."""
    table = _as_tensor(table)
    idx = np.asarray(ids, dtype=np.intp)
    out = Tensor(table.data[idx])
    if _needs_graph(table):
        out._parents = (table,)

        def _bw(g):
            gt = np.zeros_like(table.data)
            np.add.at(gt, idx, g)
            table.accumulate_grad(gt)

        out._backward = _bw
    return out


# ---------------------------------------------------------------------------
# normalizing operations
# ---------------------------------------------------------------------------

def softmax_lastdim(x) -> Tensor:
    x = _as_tensor(x)
    # Row-max subtraction keeps exp() in range regardless of score scale.
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)
    out = Tensor(y)
    if _needs_graph(x):
        out._parents = (x,)

        def _bw(g):
            x.accumulate_grad(y * (g - (g * y).sum(axis=-1, keepdims=True)))

        out._backward = _bw
    return out


def log_softmax_lastdim(x) -> Tensor:
    x = _as_tensor(x)
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    y = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    out = Tensor(y)
    if _needs_graph(x):
        out._parents = (x,)

        def _bw(g):
            x.accumulate_grad(g - np.exp(y) * g.sum(axis=-1, keepdims=True))

        out._backward = _bw
    return out


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalize the last dimension to zero mean / unit variance, then affine."""
    if eps <= 0:
        raise ValueError("layer_norm eps must be positive")
    x, gain, bias = _as_tensor(x), _as_tensor(gain), _as_tensor(bias)
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ValueError(
            f"layer_norm gain/bias must match last dim {d}, got {gain.shape} and {bias.shape}"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    out = Tensor(xhat * gain.data + bias.data)
    if _needs_graph(x, gain, bias):
        out._parents = (x, gain, bias)
        reduce_axes = tuple(range(x.ndim - 1))

        def _bw(g):
            if gain.requires_grad or gain._parents:
                gain.accumulate_grad((g * xhat).sum(axis=reduce_axes))
            if bias.requires_grad or bias._parents:
                bias.accumulate_grad(g.sum(axis=reduce_axes))
            if x.requires_grad or x._parents:
                gx = g * gain.data
                gx = gx - gx.mean(axis=-1, keepdims=True) \
                    - xhat * (gx * xhat).mean(axis=-1, keepdims=True)
                x.accumulate_grad(gx * inv_std)

        out._backward = _bw
    return out
