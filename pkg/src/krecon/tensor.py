"""Dense tensors with reverse-mode automatic differentiation.

Every operation executes eagerly on a numpy array and, when gradients are
enabled, appends one node to a flat tape. Because nodes are appended in
execution order, the tape is already topologically sorted and the backward
pass is a single reverse sweep. Single logical thread only: the tape is
module-level state.

Precision policy: float32 for training, float64 for gradient and oracle
verification. Ops never change the dtype of their inputs.
"""

from __future__ import annotations

import numpy as np


class DimensionError(ValueError):
    """Raised when operand shapes are incompatible for an operation."""


class Tensor:
    """A dense real tensor, optionally tracked for reverse-mode autodiff.

    ``grad`` is populated (same shape as ``data``) by :func:`backward` for
    every tensor on the differentiable path; tensors with
    ``requires_grad=False`` never receive gradient.
    """

    __slots__ = ("data", "requires_grad", "grad", "is_leaf")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.is_leaf = True

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "Tensor":
        """Copy of this tensor cut off from the tape."""
        return Tensor(self.data.copy(), requires_grad=False)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    # Arithmetic sugar; all routed through the taped primitives below.
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


# ---------------------------------------------------------------------------
# Tape

_TAPE: list = []
_GRAD_ENABLED = True


class no_grad:
    """Context manager disabling tape recording (evaluation mode)."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev
        return False


def tape_size() -> int:
    return len(_TAPE)


def clear_tape():
    _TAPE.clear()


def record(out: Tensor, inputs, backward_fn):
    """Register an op on the tape.

    ``backward_fn(grad_out)`` must return one gradient array (or None) per
    input, in order. Recording is skipped when gradients are globally
    disabled or no input requires grad.
    """
    if _GRAD_ENABLED and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out.is_leaf = False
        _TAPE.append((out, tuple(inputs), backward_fn))
    return out


def backward(loss: Tensor):
    """Reverse sweep: populate ``grad`` on every requires-grad leaf.

    The tape is consumed (cleared) afterwards; intermediate gradients are
    dropped so only leaves keep theirs.
    """
    if loss.data.shape != ():
        raise DimensionError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    if not _TAPE:
        raise RuntimeError("backward called with an empty tape")
    loss.grad = np.ones((), dtype=loss.data.dtype)
    for out, inputs, backward_fn in reversed(_TAPE):
        if out.grad is None:
            continue
        grads = backward_fn(out.grad)
        for inp, g in zip(inputs, grads):
            if g is None or not inp.requires_grad:
                continue
            if inp.grad is None:
                inp.grad = g
            else:
                inp.grad = inp.grad + g
    for out, _, _ in _TAPE:
        if not out.is_leaf:
            out.grad = None
    _TAPE.clear()


# ---------------------------------------------------------------------------
# Primitives

def _same_dtype(*tensors):
    dt = tensors[0].data.dtype
    for t in tensors[1:]:
        if t.data.dtype != dt:
            raise DimensionError(
                f"mixed dtypes {dt} vs {t.data.dtype}; cast inputs explicitly")
    return dt


def _unbroadcast(g, shape):
    # Sum g down to `shape` after numpy broadcasting.
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum with numpy broadcasting."""
    _same_dtype(a, b)
    out = Tensor(a.data + b.data)
    return record(out, (a, b), lambda g: (_unbroadcast(g, a.data.shape),
                                          _unbroadcast(g, b.data.shape)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise difference with numpy broadcasting."""
    _same_dtype(a, b)
    out = Tensor(a.data - b.data)
    return record(out, (a, b), lambda g: (_unbroadcast(g, a.data.shape),
                                          _unbroadcast(-g, b.data.shape)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product with numpy broadcasting."""
    _same_dtype(a, b)
    out = Tensor(a.data * b.data)
    return record(out, (a, b), lambda g: (_unbroadcast(g * b.data, a.data.shape),
                                          _unbroadcast(g * a.data, b.data.shape)))


def scale(a: Tensor, c: float) -> Tensor:
    """Multiply by a python scalar constant."""
    c = a.data.dtype.type(c)
    out = Tensor(a.data * c)
    return record(out, (a,), lambda g: (g * c,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product, 2D or batched 3D with matching batch dims."""
    _same_dtype(a, b)
    ad, bd = a.data, b.data
    if ad.ndim < 2 or bd.ndim < 2 or ad.shape[-1] != bd.shape[-2]:
        raise DimensionError(f"matmul shapes {ad.shape} and {bd.shape} do not agree")
    if ad.ndim != bd.ndim or (ad.ndim == 3 and ad.shape[0] != bd.shape[0]):
        raise DimensionError(f"matmul batch dims {ad.shape} vs {bd.shape} do not match")
    out = Tensor(np.matmul(ad, bd))

    def bw(g):
        ga = np.matmul(g, np.swapaxes(bd, -1, -2))
        gb = np.matmul(np.swapaxes(ad, -1, -2), g)
        return ga, gb

    return record(out, (a, b), bw)


def reshape(a: Tensor, shape) -> Tensor:
    orig = a.data.shape
    out = Tensor(a.data.reshape(shape))
    return record(out, (a,), lambda g: (g.reshape(orig),))


def transpose(a: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    out = Tensor(a.data.transpose(axes))
    return record(out, (a,), lambda g: (g.transpose(inv),))


def sum_all(a: Tensor) -> Tensor:
    """Sum every element into a scalar tensor."""
    out = Tensor(a.data.sum())
    return record(out, (a,), lambda g: (np.broadcast_to(g, a.data.shape).astype(a.data.dtype, copy=False),))


def sqrt(a: Tensor) -> Tensor:
    """Elementwise square root. Gradient is unbounded at exact zero."""
    val = np.sqrt(a.data)
    out = Tensor(val)
    return record(out, (a,), lambda g: (g * (0.5 / val),))


def relu(a: Tensor) -> Tensor:
    out = Tensor(np.maximum(a.data, 0))
    return record(out, (a,), lambda g: (g * (a.data > 0),))


def leaky_relu(a: Tensor, slope: float = 0.01) -> Tensor:
    d = a.data
    out = Tensor(np.where(d > 0, d, d * d.dtype.type(slope)))
    return record(out, (a,), lambda g: (np.where(d > 0, g, g * d.dtype.type(slope)),))


def softmax_lastdim(x: Tensor) -> Tensor:
    """Softmax over the last axis, stabilised by subtracting the slice max.

    Works in-place on a single temporary; score matrices are the largest
    transients in the model, so allocation churn here matters.
    """
    d = x.data
    if d.ndim == 0 or d.shape[-1] < 1:
        raise DimensionError(f"softmax needs a non-empty last dim, got shape {d.shape}")
    y = d - d.max(axis=-1, keepdims=True)
    np.exp(y, out=y)
    y /= y.sum(axis=-1, keepdims=True)
    out = Tensor(y)

    def bw(g):
        dot = np.einsum("...i,...i->...", g, y)[..., None]
        ret = g - dot
        ret *= y
        return (ret,)

    return record(out, (x,), bw)


LAYER_NORM_EPS = 1e-5


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor) -> Tensor:
    """Normalise the last axis to zero mean / unit variance, then affine."""
    _same_dtype(x, gain, bias)
    d = x.data
    dim = d.shape[-1]
    if gain.data.shape != (dim,) or bias.data.shape != (dim,):
        raise DimensionError(
            f"layer_norm affine shapes {gain.data.shape}/{bias.data.shape} "
            f"do not match normalised dim {dim}")
    eps = d.dtype.type(LAYER_NORM_EPS)
    mu = d.mean(axis=-1, keepdims=True)
    xc = d - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = Tensor(xhat * gain.data + bias.data)

    def bw(g):
        lead = tuple(range(g.ndim - 1))
        ggain = (g * xhat).sum(axis=lead) if lead else g * xhat
        gbias = g.sum(axis=lead) if lead else g
        gh = g * gain.data
        gx = inv * (gh - gh.mean(axis=-1, keepdims=True)
                    - xhat * (gh * xhat).mean(axis=-1, keepdims=True))
        return gx.astype(d.dtype, copy=False), ggain, gbias

    return record(out, (x, gain, bias), bw)


def _im2col(xp, h, w):
    # xp: zero-padded (C, H+2, W+2) -> (C*9, H*W) patch matrix.
    win = np.lib.stride_tricks.sliding_window_view(xp, (3, 3), axis=(1, 2))
    return win.transpose(0, 3, 4, 1, 2).reshape(xp.shape[0] * 9, h * w)


def conv2d(x: Tensor, kernels: Tensor, bias: Tensor) -> Tensor:
    """3x3 same-size cross-correlation: (C_in,H,W) -> (C_out,H,W).

    Padding 1, stride 1 only; other kernel sizes are rejected. Implemented
    as an im2col GEMM; backward rebuilds the patch matrix rather than
    caching it.
    """
    _same_dtype(x, kernels, bias)
    xd, kd = x.data, kernels.data
    if xd.ndim != 3:
        raise DimensionError(f"conv2d input must be (C,H,W), got {xd.shape}")
    if kd.ndim != 4 or kd.shape[2:] != (3, 3):
        raise DimensionError(f"conv2d supports only 3x3 kernels, got {kd.shape}")
    c_out, c_in = kd.shape[:2]
    if c_in != xd.shape[0]:
        raise DimensionError(f"conv2d channels: input {xd.shape} vs kernels {kd.shape}")
    if bias.data.shape != (c_out,):
        raise DimensionError(f"conv2d bias shape {bias.data.shape} != ({c_out},)")
    h, w = xd.shape[1:]
    xp = np.zeros((c_in, h + 2, w + 2), dtype=xd.dtype)
    xp[:, 1:-1, 1:-1] = xd
    cols = _im2col(xp, h, w)
    out_flat = kd.reshape(c_out, c_in * 9) @ cols + bias.data[:, None]
    out = Tensor(out_flat.reshape(c_out, h, w))

    def bw(g):
        gf = g.reshape(c_out, h * w)
        cols_b = _im2col(xp, h, w)
        gk = (gf @ cols_b.T).reshape(c_out, c_in, 3, 3)
        gb = gf.sum(axis=1)
        gcols = (kd.reshape(c_out, c_in * 9).T @ gf).reshape(c_in, 3, 3, h, w)
        gxp = np.zeros_like(xp)
        for dy in range(3):
            for dx in range(3):
                gxp[:, dy:dy + h, dx:dx + w] += gcols[:, dy, dx]
        return gxp[:, 1:-1, 1:-1], gk, gb

    return record(out, (x, kernels, bias), bw)


def stop_gradient(a: Tensor) -> Tensor:
    """Forward identity that blocks gradient flow (never recorded)."""
    return Tensor(a.data.copy(), requires_grad=False)


def mlp2(x: Tensor, w1: Tensor, b1: Tensor, w2: Tensor, b2: Tensor) -> Tensor:
    """Two-level MLP: linear -> ReLU -> linear."""
    return add(matmul(relu(add(matmul(x, w1), b1)), w2), b2)


def constant(data, dtype=None) -> Tensor:
    """Non-learnable tensor (e.g. positional encodings, masks)."""
    return Tensor(np.asarray(data), requires_grad=False, dtype=dtype)


# ---------------------------------------------------------------------------
# Gradient verification

def zero_grads(params: dict):
    for t in params.values():
        t.grad = None


def finite_diff_check(f, params: dict, probes, h: float = 1e-5) -> float:
    """Compare analytic gradients of ``f(params)`` against central differences.

    ``probes`` is a list of (name, flat_index) pairs into ``params``. Returns
    the max over probes of |analytic - numeric| / (|analytic| + 1e-8).
    Use float64 parameters; the check is unreliable in float32.
    """
    for name, idx in probes:
        if name not in params:
            raise KeyError(f"probe names unknown parameter {name!r}")
        if not 0 <= idx < params[name].data.size:
            raise IndexError(f"probe index {idx} out of range for {name!r} "
                             f"(size {params[name].data.size})")
    zero_grads(params)
    clear_tape()
    loss = f(params)
    backward(loss)
    analytic = {(n, i): params[n].grad.flat[i] if params[n].grad is not None else 0.0
                for n, i in probes}
    worst = 0.0
    for name, idx in probes:
        p = params[name]
        orig = p.data.flat[idx]
        p.data.flat[idx] = orig + h
        with no_grad():
            up = float(f(params).data)
        p.data.flat[idx] = orig - h
        with no_grad():
            down = float(f(params).data)
        p.data.flat[idx] = orig
        numeric = (up - down) / (2.0 * h)
        a = analytic[(name, idx)]
        worst = max(worst, abs(a - numeric) / (abs(a) + 1e-8))
    zero_grads(params)
    return worst
