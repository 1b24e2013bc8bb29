"""Reverse-mode differentiation over dense 2-D arrays.

Every :class:`Value` wraps a ``(rows, cols)`` numpy array. Operations record
their parents and a closure that pushes the output gradient back to them;
:meth:`Value.backward` runs those closures in reverse topological order.
Gradients accumulate, so call :func:`zero_grad` between steps.

Row broadcasting is the only broadcasting supported: a ``(1, n)`` operand of
``add``/``mul`` is applied to every row of an ``(m, n)`` operand.
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .errors import DomainError


class Value:
    __slots__ = ("data", "grad", "_parents", "_backward", "op", "name")

    def __init__(self, data, parents=(), op="", name=None, dtype=None):
        data = np.asarray(data, dtype=dtype)
        if data.ndim == 0:
            data = data.reshape(1, 1)
        elif data.ndim == 1:
            data = data.reshape(1, -1)
        elif data.ndim != 2:
            raise DomainError(f"Value holds 2-D arrays only, got shape {data.shape}")
        if data.dtype not in (np.float32, np.float64):
            data = data.astype(np.float64)
        self.data = data
        self.grad = None
        self._parents = parents
        self._backward = None
        self.op = op
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Value{label}(shape={self.shape}, op={self.op or 'leaf'})"

    def zero_grad(self):
        self.grad = None

    def _accum(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self):
        """Populate ``.grad`` on every node reachable from this scalar."""
        if self.shape != (1, 1):
            raise DomainError(f"backward() needs a scalar root, got shape {self.shape}")
        order = []
        seen = set()
        stack = [(self, False)]
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
                if id(p) not in seen:
                    stack.append((p, False))
        self._accum(np.ones((1, 1), dtype=self.data.dtype))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    __add__ = lambda self, other: add(self, other)
    __radd__ = lambda self, other: add(other, self)
    __sub__ = lambda self, other: sub(self, other)
    __rsub__ = lambda self, other: sub(other, self)
    __mul__ = lambda self, other: mul(self, other)
    __rmul__ = lambda self, other: mul(other, self)
    __matmul__ = lambda self, other: matmul(self, other)
    __neg__ = lambda self: scale(self, -1.0)

    @property
    def T(self):
        return transpose(self)


def zero_grad(params):
    for p in params:
        p.grad = None


def _lift(x, like=None):
    if isinstance(x, Value):
        return x
    dtype = like.dtype if like is not None else None
    return Value(np.asarray(x, dtype=dtype))


def _shape_error(op, a, b):
    return DomainError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


def _broadcast_ok(a, b):
    return a.shape == b.shape or (b.shape[0] == 1 and a.shape[1] == b.shape[1]) \
        or (a.shape[0] == 1 and a.shape[1] == b.shape[1])


def _reduce_to(g, shape):
    if g.shape == shape:
        return g
    return g.sum(axis=0, keepdims=True)


def matmul(a, b):
    a, b = _lift(a), _lift(b)
    if a.shape[1] != b.shape[0]:
        raise _shape_error("matmul", a, b)
    out = Value(a.data @ b.data, (a, b), "matmul")

    def _bw(g):
        a._accum(g @ b.data.T)
        b._accum(a.data.T @ g)

    out._backward = _bw
    return out


def add(a, b):
    a = _lift(a, b if isinstance(b, Value) else None)
    b = _lift(b, a)
    if not _broadcast_ok(a, b):
        raise _shape_error("add", a, b)
    out = Value(a.data + b.data, (a, b), "add")

    def _bw(g):
        a._accum(_reduce_to(g, a.shape))
        b._accum(_reduce_to(g, b.shape))

    out._backward = _bw
    return out


def sub(a, b):
    a = _lift(a, b if isinstance(b, Value) else None)
    b = _lift(b, a)
    if not _broadcast_ok(a, b):
        raise _shape_error("sub", a, b)
    out = Value(a.data - b.data, (a, b), "sub")

    def _bw(g):
        a._accum(_reduce_to(g, a.shape))
        b._accum(-_reduce_to(g, b.shape))

    out._backward = _bw
    return out


def mul(a, b):
    a = _lift(a, b if isinstance(b, Value) else None)
    b = _lift(b, a)
    if not _broadcast_ok(a, b):
        raise _shape_error("mul", a, b)
    out = Value(a.data * b.data, (a, b), "mul")

    def _bw(g):
        a._accum(_reduce_to(g * b.data, a.shape))
        b._accum(_reduce_to(g * a.data, b.shape))

    out._backward = _bw
    return out


def scale(a, c):
    """Multiply by a Python scalar constant."""
    out = Value(a.data * a.data.dtype.type(c), (a,), "scale")
    out._backward = lambda g: a._accum(g * a.data.dtype.type(c))
    return out


def tanh(a):
    t = np.tanh(a.data)
    out = Value(t, (a,), "tanh")
    out._backward = lambda g: a._accum(g * (1 - t * t))
    return out


def sigmoid(a):
    s = 1 / (1 + np.exp(-a.data))
    out = Value(s, (a,), "sigmoid")
    out._backward = lambda g: a._accum(g * s * (1 - s))
    return out


def relu(a):
    mask = a.data > 0
    out = Value(np.where(mask, a.data, 0).astype(a.dtype), (a,), "relu")
    out._backward = lambda g: a._accum(g * mask)
    return out


def square(a):
    out = Value(a.data * a.data, (a,), "square")
    out._backward = lambda g: a._accum(g * 2 * a.data)
    return out


def absolute(a):
    out = Value(np.abs(a.data), (a,), "abs")
    out._backward = lambda g: a._accum(g * np.sign(a.data))
    return out


def transpose(a):
    out = Value(a.data.T.copy(), (a,), "transpose")
    out._backward = lambda g: a._accum(g.T)
    return out


def concat_cols(values):
    values = list(values)
    rows = {v.shape[0] for v in values}
    if len(rows) != 1:
        raise DomainError(f"concat_cols: row counts differ {[v.shape for v in values]}")
    out = Value(np.concatenate([v.data for v in values], axis=1), tuple(values), "concat_cols")
    bounds = np.cumsum([0] + [v.shape[1] for v in values])

    def _bw(g):
        for v, lo, hi in zip(values, bounds[:-1], bounds[1:]):
            v._accum(g[:, lo:hi])

    out._backward = _bw
    return out


def slice_cols(a, start, stop):
    if not 0 <= start < stop <= a.shape[1]:
        raise DomainError(f"slice_cols: [{start}, {stop}) out of range for {a.shape}")
    out = Value(a.data[:, start:stop].copy(), (a,), "slice_cols")

    def _bw(g):
        full = np.zeros_like(a.data)
        full[:, start:stop] = g
        a._accum(full)

    out._backward = _bw
    return out


def sum_all(a):
    out = Value(a.data.sum(dtype=a.dtype).reshape(1, 1), (a,), "sum")
    out._backward = lambda g: a._accum(np.broadcast_to(g, a.shape))
    return out


def mean(a):
    n = a.data.size
    out = Value((a.data.sum(dtype=a.dtype) / a.dtype.type(n)).reshape(1, 1), (a,), "mean")
    out._backward = lambda g: a._accum(np.broadcast_to(g / a.dtype.type(n), a.shape))
    return out


def reshape(a, rows, cols):
    if rows * cols != a.data.size:
        raise DomainError(f"reshape: cannot view {a.shape} as ({rows}, {cols})")
    out = Value(a.data.reshape(rows, cols), (a,), "reshape")
    out._backward = lambda g: a._accum(g.reshape(a.shape))
    return out


def block_transpose(a, n_blocks):
    """Transpose each of ``n_blocks`` stacked row blocks: ``(n*r, c) -> (n*c, r)``."""
    if a.shape[0] % n_blocks:
        raise DomainError(f"block_transpose: {a.shape[0]} rows not divisible by {n_blocks}")
    r, c = a.shape[0] // n_blocks, a.shape[1]
    out = Value(a.data.reshape(n_blocks, r, c).transpose(0, 2, 1).reshape(n_blocks * c, r),
                (a,), "block_transpose")
    out._backward = lambda g: a._accum(g.reshape(n_blocks, c, r).transpose(0, 2, 1).reshape(a.shape))
    return out


def wrap_cols(a, cols):
    """Wrap the selected columns into [-180, 180]; gradient passes straight through."""
    d = a.data.copy()
    d[:, cols] = kernels.wrap_angles(d[:, cols])
    out = Value(d, (a,), "wrap")
    out._backward = lambda g: a._accum(g)
    return out


def layer_norm(a, eps=1e-5):
    """Normalise each row to zero mean and unit variance (no affine part)."""
    x = a.data
    mu = x.mean(axis=1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=1, keepdims=True)
    inv = 1 / np.sqrt(var + x.dtype.type(eps))
    y = xc * inv
    out = Value(y, (a,), "layer_norm")
    n = x.shape[1]

    def _bw(g):
        gm = g.mean(axis=1, keepdims=True)
        gy = (g * y).mean(axis=1, keepdims=True)
        a._accum(inv * (g - gm - y * gy))

    out._backward = _bw
    return out


def lstm_cell(z, c_prev):
    """Fused LSTM update from gate pre-activations ``z = [i | f | o | g]``.

    Returns one Value ``[h | c]`` of shape ``(rows, 2 * hidden)``.
    """
    hd = c_prev.shape[1]
    if z.shape != (c_prev.shape[0], 4 * hd):
        raise _shape_error("lstm_cell", z, c_prev)
    hc, acts = kernels.lstm_cell_forward(z.data, c_prev.data)
    out = Value(hc, (z, c_prev), "lstm_cell")

    def _bw(g):
        dz, dc_prev = kernels.lstm_cell_backward(g, acts, c_prev.data, hc)
        z._accum(dz)
        c_prev._accum(dc_prev)

    out._backward = _bw
    return out


def grad_check(f, params, eps=1e-5):
    """Largest relative gap between analytic and central-difference gradients.

    ``f`` is a zero-argument callable that rebuilds the graph from ``params``
    and returns a scalar :class:`Value`. Use float64 parameters.
    """
    if not eps > 0:
        raise DomainError("eps must be positive")
    params = list(params)
    zero_grad(params)
    f().backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    worst = 0.0
    for p, ga in zip(params, analytic):
        flat = p.data.reshape(-1)
        gflat = ga.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = float(f().data[0, 0])
            flat[i] = orig - eps
            down = float(f().data[0, 0])
            flat[i] = orig
            num = (up - down) / (2 * eps)
            err = abs(gflat[i] - num) / max(1e-8, abs(gflat[i]) + abs(num))
            worst = max(worst, err)
    return worst
