"""Minimal reverse-mode automatic differentiation over dense float64 tensors.

Operations record nodes on the active :class:`Tape` (a thread-local stack);
without an active tape they evaluate plainly. Gradients accumulate into
``Tensor.grad`` on leaf tensors and the caller zeroes them between steps.
Reduction order is serial and fixed, so identical tapes produce bit-identical
gradients.
"""

from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np

_Array = np.ndarray


class Tensor:
    """A dense float64 array plus gradient bookkeeping."""

    __slots__ = ("values", "requires_grad", "grad", "is_leaf")

    def __init__(self, values, requires_grad: bool = False):
        arr = np.asarray(values, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise ValueError("tensor values must be finite")
        self.values = arr
        self.requires_grad = requires_grad
        self.grad: _Array | None = None
        self.is_leaf = True

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def size(self) -> int:
        return self.values.size

    def item(self) -> float:
        return float(self.values.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.values.shape}{flag})"

    # arithmetic sugar; scalars and arrays are wrapped as constants
    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __truediv__(self, other):
        return div(self, _wrap(other))

    def __rtruediv__(self, other):
        return div(_wrap(other), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, _wrap(other))

    def __getitem__(self, key):
        return take(self, key)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class _Node:
    __slots__ = ("inputs", "output", "backward_fn")

    def __init__(self, inputs: tuple[Tensor, ...], output: Tensor,
                 backward_fn: Callable[[_Array], Sequence[_Array | None]]):
        self.inputs = inputs
        self.output = output
        self.backward_fn = backward_fn


class Tape:
    """Recorded operation nodes in execution (topological) order.

    Single-owner: one tape per refinement job, entered as a context manager
    around the forward pass. Nested tapes are allowed; ops record on the
    innermost active one.
    """

    _local = threading.local()

    def __init__(self):
        self.nodes: list[_Node] = []

    def __enter__(self) -> "Tape":
        stack = getattr(Tape._local, "stack", None)
        if stack is None:
            stack = Tape._local.stack = []
        stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        Tape._local.stack.pop()

    @classmethod
    def current(cls) -> "Tape | None":
        stack = getattr(cls._local, "stack", None)
        return stack[-1] if stack else None

    def backward(self, seeds: dict[Tensor, _Array | float]) -> None:
        """Propagate upstream gradients from ``seeds`` back to every leaf.

        Seeds map tensors (typically the scalar loss, optionally interior
        tensors such as rendered frames) to their upstream gradients. Leaf
        gradients accumulate across calls.
        """
        pending: dict[int, _Array] = {}
        keep: dict[int, Tensor] = {}
        for t, g in seeds.items():
            g = np.broadcast_to(np.asarray(g, dtype=np.float64), t.values.shape).copy()
            _accumulate(pending, keep, t, g)
        for node in reversed(self.nodes):
            g = pending.pop(id(node.output), None)
            if g is None:
                continue
            keep.pop(id(node.output), None)
            for t, gi in zip(node.inputs, node.backward_fn(g)):
                if gi is None:
                    continue
                _accumulate(pending, keep, t, gi)

    def record(self, inputs: tuple[Tensor, ...], output: Tensor,
               backward_fn: Callable[[_Array], Sequence[_Array | None]]) -> None:
        """Append a node. Exposed so modules can register fused primitives."""
        self.nodes.append(_Node(inputs, output, backward_fn))


def _accumulate(pending: dict[int, _Array], keep: dict[int, Tensor],
                t: Tensor, g: _Array) -> None:
    if t.is_leaf:
        if t.requires_grad:
            t.grad = g.copy() if t.grad is None else t.grad + g
        return
    key = id(t)
    if key in pending:
        pending[key] = pending[key] + g
    else:
        pending[key] = g
        keep[key] = t


def backward(loss: Tensor, tape: Tape) -> None:
    """Seed d(loss)/d(loss) = 1 and populate leaf gradients."""
    if loss.size != 1:
        raise ValueError(f"backward expects a scalar loss, got shape {loss.shape}")
    tape.backward({loss: np.ones_like(loss.values)})


def _make(values: _Array, inputs: tuple[Tensor, ...],
          backward_fn: Callable[[_Array], Sequence[_Array | None]]) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.values = values
    out.grad = None
    out.requires_grad = any(t.requires_grad for t in inputs)
    out.is_leaf = not out.requires_grad
    tape = Tape.current()
    if tape is not None and out.requires_grad:
        out.is_leaf = False
        tape.record(inputs, out, backward_fn)
    return out


def _unbroadcast(g: _Array, shape: tuple[int, ...]) -> _Array:
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def custom_op(values: _Array, inputs: Sequence[Tensor],
              backward_fn: Callable[[_Array], Sequence[_Array | None]]) -> Tensor:
    """Register a fused primitive with hand-derived local gradients.

    ``backward_fn`` receives the upstream gradient and must return one
    gradient (or None) per input, in order.
    """
    return _make(np.asarray(values, dtype=np.float64), tuple(inputs), backward_fn)


# ---------------------------------------------------------------------------
# elementwise arithmetic

def add(a: Tensor, b: Tensor) -> Tensor:
    return _make(a.values + b.values, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    return _make(a.values - b.values, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    return _make(a.values * b.values, (a, b),
                 lambda g: (_unbroadcast(g * b.values, a.shape),
                            _unbroadcast(g * a.values, b.shape)))


def div(a: Tensor, b: Tensor) -> Tensor:
    return _make(a.values / b.values, (a, b),
                 lambda g: (_unbroadcast(g / b.values, a.shape),
                            _unbroadcast(-g * a.values / (b.values * b.values), b.shape)))


def neg(a: Tensor) -> Tensor:
    return _make(-a.values, (a,), lambda g: (-g,))


# ---------------------------------------------------------------------------
# linear algebra and shape ops

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul expects tensors with ndim >= 2")

    def bwd(g: _Array):
        ga = g @ np.swapaxes(b.values, -1, -2)
        gb = np.swapaxes(a.values, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _make(a.values @ b.values, (a, b), bwd)


def transpose(a: Tensor, axes: tuple[int, ...] | None = None) -> Tensor:
    inv = None if axes is None else tuple(np.argsort(axes))
    return _make(np.transpose(a.values, axes), (a,),
                 lambda g: (np.transpose(g, inv),))


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    old = a.shape
    return _make(a.values.reshape(shape), (a,), lambda g: (g.reshape(old),))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [_wrap(t) for t in tensors]
    values = np.concatenate([t.values for t in tensors], axis=axis)
    sizes = [t.values.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    return _make(values, tuple(tensors),
                 lambda g: tuple(np.split(g, splits, axis=axis)))


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [_wrap(t) for t in tensors]
    values = np.stack([t.values for t in tensors], axis=axis)
    return _make(values, tuple(tensors),
                 lambda g: tuple(np.moveaxis(g, axis, 0)))


def take(a: Tensor, key) -> Tensor:
    def bwd(g: _Array):
        buf = np.zeros_like(a.values)
        np.add.at(buf, key, g)
        return (buf,)

    return _make(a.values[key], (a,), bwd)


# ---------------------------------------------------------------------------
# reductions

def tensor_sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    def bwd(g: _Array):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(a.values.sum(axis=axis, keepdims=keepdims), (a,), bwd)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = a.size if axis is None else np.prod(
        [a.shape[ax] for ax in (axis if isinstance(axis, tuple) else (axis,))])

    def bwd(g: _Array):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape) / count,)

    return _make(a.values.mean(axis=axis, keepdims=keepdims), (a,), bwd)


def max_reduce(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    """Max over an axis; gradient routes to the first maximal element."""
    values = a.values.max(axis=axis, keepdims=keepdims)

    def bwd(g: _Array):
        buf = np.zeros_like(a.values)
        if axis is None:
            flat_idx = int(a.values.argmax())
            buf.reshape(-1)[flat_idx] = g.reshape(())
        else:
            idx = np.expand_dims(a.values.argmax(axis=axis), axis)
            gg = g if keepdims else np.expand_dims(g, axis)
            np.put_along_axis(buf, idx, gg, axis=axis)
        return (buf,)

    return _make(values, (a,), bwd)


# ---------------------------------------------------------------------------
# pointwise nonlinearities

def sin(a: Tensor) -> Tensor:
    return _make(np.sin(a.values), (a,), lambda g: (g * np.cos(a.values),))


def cos(a: Tensor) -> Tensor:
    return _make(np.cos(a.values), (a,), lambda g: (-g * np.sin(a.values),))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.values)
    return _make(out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    if np.any(a.values <= 0):
        raise ValueError("log of non-positive value")
    return _make(np.log(a.values), (a,), lambda g: (g / a.values,))


def sqrt(a: Tensor) -> Tensor:
    if np.any(a.values < 0):
        raise ValueError("sqrt of negative value")
    out = np.sqrt(a.values)
    return _make(out, (a,), lambda g: (g / (2.0 * out),))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.values)
    return _make(out, (a,), lambda g: (g * (1.0 - out * out),))


LEAKY_SLOPE = 0.2


def leaky_relu(a: Tensor) -> Tensor:
    factor = np.where(a.values > 0, 1.0, LEAKY_SLOPE)
    return _make(np.where(a.values > 0, a.values, LEAKY_SLOPE * a.values),
                 (a,), lambda g: (g * factor,))


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.values - a.values.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def bwd(g: _Array):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - dot),)

    return _make(out, (a,), bwd)


# ---------------------------------------------------------------------------
# gradient verification

def finite_diff_check(f: Callable[[Tensor], Tensor], x: Tensor,
                      eps: float = 1e-5) -> float:
    """Compare reverse-mode gradients of ``f`` at ``x`` to central differences.

    Returns ``max_i |g_ad[i] - g_fd[i]| / max(1, |g_fd[i]|)``. ``f`` must be a
    pure scalar-valued function of a single tensor.
    """
    probe = Tensor(x.values.copy(), requires_grad=True)
    tape = Tape()
    with tape:
        out = f(probe)
    backward(out, tape)
    g_ad = np.zeros_like(probe.values) if probe.grad is None else probe.grad

    g_fd = np.zeros_like(x.values)
    flat = x.values.reshape(-1)
    fd_flat = g_fd.reshape(-1)
    for i in range(flat.size):
        bumped = flat.copy()
        bumped[i] = flat[i] + eps
        hi = f(Tensor(bumped.reshape(x.shape))).item()
        bumped[i] = flat[i] - eps
        lo = f(Tensor(bumped.reshape(x.shape))).item()
        fd_flat[i] = (hi - lo) / (2.0 * eps)

    denom = np.maximum(1.0, np.abs(g_fd))
    return float(np.max(np.abs(g_ad - g_fd) / denom)) if flat.size else 0.0
