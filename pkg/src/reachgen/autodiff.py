"""Reverse-mode automatic differentiation over float64 numpy arrays.

Every op here accepts either plain ndarrays (fast path, no recording) or
Tensor objects. When a Tape is active and an input requires gradients, the op
records a node with a vector-Jacobian closure; Tape.backward walks the nodes
in reverse creation order (creation order is already topological).

Ops never mutate inputs, so the same source line serves data generation,
inference, and training.
"""
from __future__ import annotations

import numpy as np

from .errors import TapeReuseError


class Tape:
    """Records operations for one backward pass.

    Use as a context manager; ops executed while the tape is active are
    recorded. A tape can be walked exactly once.
    """

    _stack: list["Tape"] = []

    def __init__(self):
        self._nodes: list[Tensor] = []
        self._walked = False

    def __enter__(self):
        Tape._stack.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        Tape._stack.pop()
        return False

    def __len__(self):
        return len(self._nodes)

    def backward(self, output: "Tensor", output_gradient=1.0) -> None:
        """Seed `output` with `output_gradient` and accumulate leaf grads."""
        if self._walked:
            raise TapeReuseError("tape has already been walked")
        self._walked = True
        seed = np.broadcast_to(np.asarray(output_gradient, dtype=np.float64),
                               output.data.shape).copy()
        output.grad = seed if output.grad is None else output.grad + seed
        for node in reversed(self._nodes):
            if node.grad is None or node._vjp is None:
                continue
            grads = node._vjp(node.grad)
            for inp, g in zip(node._inputs, grads):
                if g is None or not isinstance(inp, Tensor) or not inp.requires_grad:
                    continue
                inp.grad = g if inp.grad is None else inp.grad + g


def _active_tape() -> Tape | None:
    return Tape._stack[-1] if Tape._stack else None


class Tensor:
    """A float64 ndarray plus an optional gradient slot."""

    __slots__ = ("data", "grad", "requires_grad", "_inputs", "_vjp")

    # keep numpy from consuming Tensors in mixed expressions; reflected
    # operators below take over instead
    __array_ufunc__ = None

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._inputs = ()
        self._vjp = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor({self.data!r}, requires_grad={self.requires_grad})"

    # arithmetic; implementations live in module functions

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return subtract(self, other)

    def __rsub__(self, other):
        return subtract(other, self)

    def __mul__(self, other):
        return multiply(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return divide(self, other)

    def __rtruediv__(self, other):
        return divide(other, self)

    def __neg__(self):
        return negative(self)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, idx):
        return take(self, idx)


def value(x):
    """Underlying ndarray of a Tensor, or x itself."""
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def is_tensor(x) -> bool:
    return isinstance(x, Tensor)


def constant(x) -> Tensor:
    return Tensor(x)


def _record(out_data, inputs, vjp):
    # without an active tape no gradient can ever be requested, so ops
    # degrade to plain arrays and inference runs at numpy speed
    tape = _active_tape()
    if tape is None:
        return out_data
    out = Tensor(out_data)
    if any(isinstance(i, Tensor) and i.requires_grad for i in inputs):
        out.requires_grad = True
        out._inputs = tuple(inputs)
        out._vjp = vjp
        tape._nodes.append(out)
    return out


def _unbroadcast(g, shape):
    """Sum g over axes that were broadcast so it matches `shape`."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _any_tensor(*xs):
    return any(isinstance(x, Tensor) for x in xs)


# ---------------------------------------------------------------- binary ops

def add(x, y):
    if not _any_tensor(x, y):
        return np.add(x, y)
    xd, yd = value(x), value(y)
    return _record(xd + yd, (x, y),
                   lambda g: (_unbroadcast(g, xd.shape), _unbroadcast(g, yd.shape)))


def subtract(x, y):
    if not _any_tensor(x, y):
        return np.subtract(x, y)
    xd, yd = value(x), value(y)
    return _record(xd - yd, (x, y),
                   lambda g: (_unbroadcast(g, xd.shape), _unbroadcast(-g, yd.shape)))


def multiply(x, y):
    if not _any_tensor(x, y):
        return np.multiply(x, y)
    xd, yd = value(x), value(y)
    return _record(xd * yd, (x, y),
                   lambda g: (_unbroadcast(g * yd, xd.shape), _unbroadcast(g * xd, yd.shape)))


def divide(x, y):
    if not _any_tensor(x, y):
        return np.divide(x, y)
    xd, yd = value(x), value(y)
    out = xd / yd
    return _record(out, (x, y),
                   lambda g: (_unbroadcast(g / yd, xd.shape),
                              _unbroadcast(-g * out / yd, yd.shape)))


def matmul(x, y):
    if not _any_tensor(x, y):
        return np.matmul(x, y)
    xd, yd = value(x), value(y)
    if xd.ndim < 2 or yd.ndim < 2:
        raise ValueError("matmul requires ndim >= 2 on both sides")
    out = xd @ yd

    def vjp(g):
        gx = _unbroadcast(g @ yd.mT, xd.shape)
        gy = _unbroadcast(xd.mT @ g, yd.shape)
        return gx, gy

    return _record(out, (x, y), vjp)


def power(x, p):
    if not isinstance(x, Tensor):
        return np.power(x, p)
    xd = value(x)
    p = float(p)
    return _record(xd ** p, (x,), lambda g: (g * p * xd ** (p - 1.0),))


def atan2(y, x):
    if not _any_tensor(y, x):
        return np.arctan2(y, x)
    yd, xd = value(y), value(x)
    denom = xd * xd + yd * yd
    return _record(np.arctan2(yd, xd), (y, x),
                   lambda g: (_unbroadcast(g * xd / denom, yd.shape),
                              _unbroadcast(-g * yd / denom, xd.shape)))


def maximum(x, y):
    if not _any_tensor(x, y):
        return np.maximum(x, y)
    xd, yd = value(x), value(y)
    mask = xd > yd
    return _record(np.maximum(xd, yd), (x, y),
                   lambda g: (_unbroadcast(g * mask, xd.shape),
                              _unbroadcast(g * ~mask, yd.shape)))


def minimum(x, y):
    if not _any_tensor(x, y):
        return np.minimum(x, y)
    xd, yd = value(x), value(y)
    mask = xd < yd
    return _record(np.minimum(xd, yd), (x, y),
                   lambda g: (_unbroadcast(g * mask, xd.shape),
                              _unbroadcast(g * ~mask, yd.shape)))


def cross3(a, b):
    """Cross product along the last axis (length 3)."""
    if not _any_tensor(a, b):
        return np.cross(a, b)
    ad, bd = value(a), value(b)
    return _record(np.cross(ad, bd), (a, b),
                   lambda g: (_unbroadcast(np.cross(bd, g), ad.shape),
                              _unbroadcast(np.cross(g, ad), bd.shape)))


# ----------------------------------------------------------------- unary ops

def negative(x):
    if not isinstance(x, Tensor):
        return np.negative(x)
    xd = value(x)
    return _record(-xd, (x,), lambda g: (-g,))


def exp(x):
    if not isinstance(x, Tensor):
        return np.exp(x)
    out = np.exp(value(x))
    return _record(out, (x,), lambda g: (g * out,))


def log(x):
    if not isinstance(x, Tensor):
        return np.log(x)
    xd = value(x)
    return _record(np.log(xd), (x,), lambda g: (g / xd,))


def sqrt(x):
    if not isinstance(x, Tensor):
        return np.sqrt(x)
    out = np.sqrt(value(x))
    return _record(out, (x,), lambda g: (g * 0.5 / out,))


def sin(x):
    if not isinstance(x, Tensor):
        return np.sin(x)
    xd = value(x)
    return _record(np.sin(xd), (x,), lambda g: (g * np.cos(xd),))


def cos(x):
    if not isinstance(x, Tensor):
        return np.cos(x)
    xd = value(x)
    return _record(np.cos(xd), (x,), lambda g: (-g * np.sin(xd),))


def relu(x):
    if not isinstance(x, Tensor):
        return np.maximum(x, 0.0)
    xd = value(x)
    mask = xd > 0.0
    return _record(xd * mask, (x,), lambda g: (g * mask,))


# ------------------------------------------------------------ shape/reduce

def reshape(x, shape):
    if not isinstance(x, Tensor):
        return np.reshape(x, shape)
    xd = value(x)
    return _record(xd.reshape(shape), (x,), lambda g: (g.reshape(xd.shape),))


def take(x, idx):
    if not isinstance(x, Tensor):
        return np.asarray(x)[idx]
    xd = value(x)

    def vjp(g):
        gx = np.zeros_like(xd)
        np.add.at(gx, idx, g)
        return (gx,)

    return _record(xd[idx], (x,), vjp)


def sum(x, axis=None, keepdims=False):  # noqa: A001 - mirrors numpy naming
    if not isinstance(x, Tensor):
        return np.sum(x, axis=axis, keepdims=keepdims)
    xd = value(x)
    out = np.sum(xd, axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, xd.shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, xd.shape).copy(),)

    return _record(out, (x,), vjp)


def mean(x, axis=None, keepdims=False):
    xd = value(x)
    if axis is None:
        n = xd.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        n = 1
        for a in axes:
            n *= xd.shape[a]
    return sum(x, axis=axis, keepdims=keepdims) * (1.0 / n)


def concatenate(parts, axis=-1):
    if not _any_tensor(*parts):
        return np.concatenate(parts, axis=axis)
    datas = [value(p) for p in parts]
    out = np.concatenate(datas, axis=axis)
    sizes = [d.shape[axis] for d in datas]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return _record(out, tuple(parts), vjp)


def stack(parts, axis=-1):
    if not _any_tensor(*parts):
        return np.stack(parts, axis=axis)
    datas = [value(p) for p in parts]
    out = np.stack(datas, axis=axis)

    def vjp(g):
        return tuple(np.moveaxis(g, axis, 0))

    return _record(out, tuple(parts), vjp)


def where(cond, x, y):
    """cond is a plain boolean array; no gradient flows through it."""
    cond = np.asarray(cond, dtype=bool)
    if not _any_tensor(x, y):
        return np.where(cond, x, y)
    xd, yd = value(x), value(y)
    return _record(np.where(cond, xd, yd), (x, y),
                   lambda g: (_unbroadcast(g * cond, xd.shape),
                              _unbroadcast(g * ~cond, yd.shape)))


def clip(x, lo, hi):
    return minimum(maximum(x, lo), hi)


def norm(x, axis=-1, keepdims=False):
    """Euclidean norm along an axis; not differentiable at exactly zero."""
    return sqrt(sum(x * x, axis=axis, keepdims=keepdims))


def finite_difference_gradient(fn, x0, h=1e-5):
    """Central-difference gradient of scalar fn at x0 (flat, same shape)."""
    x0 = np.asarray(x0, dtype=np.float64)
    g = np.zeros_like(x0)
    flat = x0.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(fn(x0))
        flat[i] = orig - h
        fm = float(fn(x0))
        flat[i] = orig
        gf[i] = (fp - fm) / (2.0 * h)
    return g
