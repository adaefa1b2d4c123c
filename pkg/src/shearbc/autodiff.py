"""Reverse-mode automatic differentiation over dense numpy arrays.

A recorded forward pass builds a tape of Tensor nodes; backward() walks the
tape in reverse topological order. The op set is exactly what the networks
in this package need (no general broadcasting). Default dtype is float32;
float64 is accepted for gradient checking.
"""

import contextlib

import numpy as np

from . import kernels

FLOAT_DTYPES = (np.float32, np.float64)

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Skip tape recording inside the block (inference paths)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class ShapeError(ValueError):
    """Raised when operand shapes do not satisfy an op's contract."""


class Tensor:
    """A node in the autodiff graph: a value, optionally a gradient slot."""

    __slots__ = ("data", "grad", "requires_grad", "_backward", "_prev", "_done")

    def __init__(self, data, requires_grad=False):
        arr = np.asarray(data)
        if arr.dtype not in FLOAT_DTYPES:
            arr = arr.astype(np.float32)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self._backward = None
        self._prev = ()
        self._done = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype})"


def _node(data, parents, backward_fn):
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad or p._prev for p in parents):
        out.requires_grad = True
        out._prev = tuple(parents)
        out._backward = backward_fn
    return out


def _check_same_shape(a, b, op):
    if a.data.shape != b.data.shape:
        raise ShapeError(f"{op}: shape mismatch {a.data.shape} vs {b.data.shape}")


def backward(loss):
    """Propagate d(loss)/d(node) to every reachable node.

    loss must be scalar and produced by a recorded forward pass; re-running
    on an already-consumed graph is rejected.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward expects a scalar loss, got shape {loss.data.shape}")
    if loss._done:
        raise RuntimeError("backward already ran on this graph; run a new forward pass")
    if not np.isfinite(loss.data):
        raise FloatingPointError(f"non-finite loss: {loss.data!r}")

    topo = []
    visited = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._prev:
            if id(p) not in visited:
                stack.append((p, False))

    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        node._done = True
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


# ---------------------------------------------------------------------------
# elementwise / reduction ops

def add(a, b):
    _check_same_shape(a, b, "add")
    def bwd(g):
        a.accumulate(g)
        b.accumulate(g)
    return _node(a.data + b.data, (a, b), bwd)


def sub(a, b):
    _check_same_shape(a, b, "sub")
    def bwd(g):
        a.accumulate(g)
        b.accumulate(-g)
    return _node(a.data - b.data, (a, b), bwd)


def mul(a, b):
    _check_same_shape(a, b, "mul")
    def bwd(g):
        a.accumulate(g * b.data)
        b.accumulate(g * a.data)
    return _node(a.data * b.data, (a, b), bwd)


def scale(a, s):
    s = float(s)
    def bwd(g):
        a.accumulate(g * s)
    return _node(a.data * np.asarray(s, dtype=a.dtype), (a,), bwd)


def add_const(a, c):
    c = np.asarray(c, dtype=a.dtype)
    def bwd(g):
        a.accumulate(g)
    return _node(a.data + c, (a,), bwd)


def relu(a):
    mask = a.data > 0
    def bwd(g):
        a.accumulate(g * mask)
    return _node(np.where(mask, a.data, 0), (a,), bwd)


def exp(a):
    out_data = np.exp(a.data)
    def bwd(g):
        a.accumulate(g * out_data)
    return _node(out_data, (a,), bwd)


def square(a):
    def bwd(g):
        a.accumulate(g * (2 * a.data))
    return _node(a.data * a.data, (a,), bwd)


def mean_all(a):
    inv = 1.0 / a.data.size
    def bwd(g):
        a.accumulate(np.full_like(a.data, g.item() * inv))
    return _node(np.asarray(a.data.mean(), dtype=a.dtype), (a,), bwd)


def sum_all(a):
    def bwd(g):
        a.accumulate(np.full_like(a.data, g.item()))
    return _node(np.asarray(a.data.sum(), dtype=a.dtype), (a,), bwd)


def mse(pred, target):
    """Mean squared error against a constant target array."""
    t = np.asarray(target, dtype=pred.dtype)
    if t.shape != pred.data.shape:
        raise ShapeError(f"mse: target shape {t.shape} vs {pred.data.shape}")
    diff = pred.data - t
    inv = 1.0 / diff.size
    def bwd(g):
        pred.accumulate((2.0 * inv * g.item()) * diff)
    return _node(np.asarray((diff * diff).mean(), dtype=pred.dtype), (pred,), bwd)


# ---------------------------------------------------------------------------
# shape ops

def reshape(a, shape):
    shape = tuple(shape)
    def bwd(g):
        a.accumulate(g.reshape(a.data.shape))
    return _node(a.data.reshape(shape), (a,), bwd)


def concat(tensors, axis=1):
    datas = [t.data for t in tensors]
    sizes = [d.shape[axis] for d in datas]
    offsets = np.cumsum([0] + sizes)
    def bwd(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            t.accumulate(g[tuple(idx)])
    return _node(np.concatenate(datas, axis=axis), tuple(tensors), bwd)


def slice_axis(a, axis, lo, hi):
    idx = [slice(None)] * a.data.ndim
    idx[axis] = slice(lo, hi)
    idx = tuple(idx)
    def bwd(g):
        full = np.zeros_like(a.data)
        full[idx] = g
        a.accumulate(full)
    return _node(np.ascontiguousarray(a.data[idx]), (a,), bwd)


# ---------------------------------------------------------------------------
# linear / conv layers

def matmul(a, b):
    """(N,I) @ (I,O); the only matrix product the nets need."""
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul: incompatible {a.data.shape} @ {b.data.shape}")
    def bwd(g):
        a.accumulate(g @ b.data.T)
        b.accumulate(a.data.T @ g)
    return _node(a.data @ b.data, (a, b), bwd)


def add_rowvec(a, v):
    """(N,O) + (O,) bias broadcast over rows."""
    if v.data.shape != (a.data.shape[-1],):
        raise ShapeError(f"add_rowvec: bias {v.data.shape} vs input {a.data.shape}")
    def bwd(g):
        a.accumulate(g)
        v.accumulate(g.sum(axis=0))
    return _node(a.data + v.data[None, :], (a, v), bwd)


def linear(x, w, b):
    """Affine map x @ w + b with x:(N,I), w:(I,O), b:(O,)."""
    return add_rowvec(matmul(x, w), b)


def conv2d(x, w, b):
    """Valid 2-D convolution, stride 1, NCHW."""
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ShapeError(f"conv2d: expected 4-D input/kernel, got {x.data.shape}, {w.data.shape}")
    if x.data.shape[1] != w.data.shape[1]:
        raise ShapeError(f"conv2d: channel mismatch {x.data.shape[1]} vs {w.data.shape[1]}")
    if w.data.shape[2] > x.data.shape[2] or w.data.shape[3] > x.data.shape[3]:
        raise ShapeError(
            f"conv2d: kernel {w.data.shape[2:]} larger than input {x.data.shape[2:]}")
    if b.data.shape != (w.data.shape[0],):
        raise ShapeError(f"conv2d: bias shape {b.data.shape} vs out channels {w.data.shape[0]}")
    out = kernels.conv2d_forward(x.data, w.data, b.data)
    def bwd(g):
        dx, dw, db = kernels.conv2d_backward(x.data, w.data, np.ascontiguousarray(g))
        x.accumulate(dx)
        w.accumulate(dw)
        b.accumulate(db)
    return _node(out, (x, w, b), bwd)


def conv1d(x, w, b):
    """Length-preserving 1-D convolution (odd kernel, zero padded), NCL."""
    if x.data.ndim != 3 or w.data.ndim != 3:
        raise ShapeError(f"conv1d: expected 3-D input/kernel, got {x.data.shape}, {w.data.shape}")
    if x.data.shape[1] != w.data.shape[1]:
        raise ShapeError(f"conv1d: channel mismatch {x.data.shape[1]} vs {w.data.shape[1]}")
    if w.data.shape[2] % 2 != 1:
        raise ShapeError(f"conv1d: kernel length must be odd, got {w.data.shape[2]}")
    out = kernels.conv1d_forward(x.data, w.data, b.data)
    def bwd(g):
        dx, dw, db = kernels.conv1d_backward(x.data, w.data, np.ascontiguousarray(g))
        x.accumulate(dx)
        w.accumulate(dw)
        b.accumulate(db)
    return _node(out, (x, w, b), bwd)


def maxpool2d(x):
    """2x2 stride-2 max pool; gradient routes to the window argmax."""
    if x.data.shape[2] < 2 or x.data.shape[3] < 2:
        raise ShapeError(f"maxpool2d: spatial dims must be >= 2, got {x.data.shape}")
    out, arg = kernels.maxpool2d_forward(x.data)
    def bwd(g):
        x.accumulate(kernels.maxpool2d_backward(arg, np.ascontiguousarray(g), x.data.shape))
    return _node(out, (x,), bwd)


def avgpool1d(x):
    """Halve the length of (N,C,L) by averaging adjacent pairs (L even)."""
    n, c, length = x.data.shape
    if length % 2 != 0:
        raise ShapeError(f"avgpool1d: length must be even, got {length}")
    out = 0.5 * (x.data[:, :, 0::2] + x.data[:, :, 1::2])
    def bwd(g):
        dx = np.empty_like(x.data)
        dx[:, :, 0::2] = 0.5 * g
        dx[:, :, 1::2] = 0.5 * g
        x.accumulate(dx)
    return _node(out, (x,), bwd)


def upsample1d(x):
    """Double the length of (N,C,L) by nearest-neighbour repetition."""
    out = np.repeat(x.data, 2, axis=2)
    def bwd(g):
        x.accumulate(g[:, :, 0::2] + g[:, :, 1::2])
    return _node(out, (x,), bwd)


def film1d(x, gain, bias):
    """Feature-wise affine modulation: y = x * (1 + gain) + bias.

    x: (N,C,L); gain, bias: (N,C) broadcast along L.
    """
    if gain.data.shape != x.data.shape[:2] or bias.data.shape != x.data.shape[:2]:
        raise ShapeError(
            f"film1d: conditioning {gain.data.shape} vs input {x.data.shape}")
    def bwd(g):
        x.accumulate(g * (1.0 + gain.data)[:, :, None])
        gain.accumulate((g * x.data).sum(axis=2))
        bias.accumulate(g.sum(axis=2))
    return _node(x.data * (1.0 + gain.data)[:, :, None] + bias.data[:, :, None],
                 (x, gain, bias), bwd)


def channelnorm1d(x, gain, bias, eps=1e-5):
    """Normalize (N,C,L) over the channel axis at each position, then affine.

    gain, bias: (C,). Backward is the standard layer-norm gradient.
    """
    if gain.data.shape != (x.data.shape[1],) or bias.data.shape != (x.data.shape[1],):
        raise ShapeError(f"channelnorm1d: affine {gain.data.shape} vs channels {x.data.shape[1]}")
    mu = x.data.mean(axis=1, keepdims=True)
    var = x.data.var(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    c = x.data.shape[1]
    def bwd(g):
        gg = g * gain.data[None, :, None]
        term = gg - gg.mean(axis=1, keepdims=True) - xhat * (gg * xhat).mean(axis=1, keepdims=True)
        x.accumulate(term * inv)
        gain.accumulate((g * xhat).sum(axis=(0, 2)))
        bias.accumulate(g.sum(axis=(0, 2)))
    return _node(xhat * gain.data[None, :, None] + bias.data[None, :, None],
                 (x, gain, bias), bwd)
