"""Differentiable primitives.

Every function validates operand shapes, computes the forward value with
numpy, and registers a backward closure returning one gradient per parent
(None for non-differentiable parents such as token ids). Shape rules per
kind are documented on each function.
"""

from __future__ import annotations

import numpy as np

from ..errors import ContractError, ShapeError, VocabError
from .tensor import Tensor, as_tensor, default_dtype, make_result


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _binary(a, b):
    a = as_tensor(a)
    b = as_tensor(b, like=a.dtype if a.dtype.kind == "f" else None)
    return a, b


def add(a, b) -> Tensor:
    a, b = _binary(a, b)
    out = a.data + b.data

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return make_result(out, "add", (a, b), bwd)


def sub(a, b) -> Tensor:
    a, b = _binary(a, b)
    out = a.data - b.data

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return make_result(out, "sub", (a, b), bwd)


def mul(a, b) -> Tensor:
    a, b = _binary(a, b)
    out = a.data * b.data

    def bwd(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return make_result(out, "mul", (a, b), bwd)


def div(a, b) -> Tensor:
    a, b = _binary(a, b)
    out = a.data / b.data

    def bwd(g):
        ga = _unbroadcast(g / b.data, a.shape)
        gb = _unbroadcast(-g * a.data / (b.data * b.data), b.shape)
        return ga, gb

    return make_result(out, "div", (a, b), bwd)


def neg(a) -> Tensor:
    a = as_tensor(a)
    return make_result(-a.data, "neg", (a,), lambda g: (-g,))


def matmul(a, b) -> Tensor:
    """Batched matrix product over the last two axes."""
    a, b = _binary(a, b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs rank >= 2 operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dims disagree: {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def bwd(g):
        ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape)
        gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape)
        return ga, gb

    return make_result(out, "matmul", (a, b), bwd)


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return make_result(a.data * mask, "relu", (a,), lambda g: (g * mask,))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    y = np.tanh(a.data)
    return make_result(y, "tanh", (a,), lambda g: (g * (1.0 - y * y),))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    y = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                 np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x)))).astype(x.dtype)
    return make_result(y, "sigmoid", (a,), lambda g: (g * y * (1.0 - y),))


def softplus(a) -> Tensor:
    """log(1 + exp(x)), computed without overflow for large |x|."""
    a = as_tensor(a)
    x = a.data
    y = np.logaddexp(0.0, x).astype(x.dtype)
    sig = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                   np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x)))).astype(x.dtype)
    return make_result(y, "softplus", (a,), lambda g: (g * sig,))


def exp(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(over="ignore"):  # overflow becomes inf, caught downstream
        y = np.exp(a.data)
    return make_result(y, "exp", (a,), lambda g: (g * y,))


def log(a) -> Tensor:
    a = as_tensor(a)
    y = np.log(a.data)
    return make_result(y, "log", (a,), lambda g: (g / a.data,))


def absolute(a) -> Tensor:
    a = as_tensor(a)
    s = np.sign(a.data)
    return make_result(np.abs(a.data), "abs", (a,), lambda g: (g * s,))


def softmax(a, axis: int = -1) -> Tensor:
    """Max-subtracted softmax along `axis`."""
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def bwd(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return ((g - dot) * y,)

    return make_result(y, "softmax", (a,), bwd)


def log_softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    y = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))

    def bwd(g):
        return (g - np.exp(y) * g.sum(axis=axis, keepdims=True),)

    return make_result(y, "log_softmax", (a,), bwd)


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(f"layer_norm gain/bias must be ({d},), got {gain.shape}/{bias.shape}")
    m = x.data.mean(axis=-1, keepdims=True)
    v = x.data.var(axis=-1, keepdims=True)
    invstd = 1.0 / np.sqrt(v + eps)
    xhat = (x.data - m) * invstd
    y = xhat * gain.data + bias.data

    def bwd(g):
        dxhat = g * gain.data
        term = dxhat - dxhat.mean(axis=-1, keepdims=True) \
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        dx = invstd * term
        reduce_axes = tuple(range(g.ndim - 1))
        dgain = (g * xhat).sum(axis=reduce_axes)
        dbias = g.sum(axis=reduce_axes)
        return dx, dgain, dbias

    return make_result(y, "layer_norm", (x, gain, bias), bwd)


def dropout(x, p: float, rng: np.random.Generator, train: bool) -> Tensor:
    """Inverted dropout: scale by 1/(1-p) at train time, identity otherwise."""
    x = as_tensor(x)
    if not 0.0 <= p < 1.0:
        raise ContractError(f"dropout rate must be in [0, 1), got {p}")
    if not train or p == 0.0:
        return make_result(x.data, "dropout", (x,), lambda g: (g,))
    keep = (rng.random(x.shape) >= p).astype(x.dtype)
    scale = x.dtype.type(1.0 / (1.0 - p))
    out = x.data * keep * scale
    return make_result(out, "dropout", (x,), lambda g: (g * keep * scale,))


def embedding_lookup(table, ids) -> Tensor:
    """Rows of `table` selected by integer `ids` (any id array shape)."""
    table = as_tensor(table)
    ids_arr = ids.data if isinstance(ids, Tensor) else np.asarray(ids)
    if ids_arr.dtype.kind not in "iu":
        raise ShapeError(f"embedding ids must be integers, got dtype {ids_arr.dtype}")
    n = table.shape[0]
    if ids_arr.size and (ids_arr.min() < 0 or ids_arr.max() >= n):
        raise VocabError(f"embedding id out of range [0, {n})")
    out = table.data[ids_arr]

    def bwd(g):
        dt = np.zeros_like(table.data)
        np.add.at(dt, ids_arr, g)
        return (dt,)

    return make_result(out, "embedding_lookup", (table,), bwd)


def _conv_pads(size, k, s, padding):
    if padding == "valid":
        return 0, 0, (size - k) // s + 1
    out = -(-size // s)  # ceil
    total = max((out - 1) * s + k - size, 0)
    return total // 2, total - total // 2, out


def conv2d(x, w, b=None, stride=(1, 1), padding: str = "same") -> Tensor:
    """2-d convolution (cross-correlation), NCHW layout.

    x: (B, C, H, W); w: (O, C, kh, kw); b: (O,) or None.
    padding 'same' keeps ceil(size/stride) per axis, 'valid' drops edges.
    """
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv2d expects 4-d x and w, got {x.shape}, {w.shape}")
    if x.shape[1] != w.shape[1]:
        raise ShapeError(f"conv2d channel mismatch: x {x.shape} vs w {w.shape}")
    if padding not in ("same", "valid"):
        raise ContractError(f"conv2d padding must be 'same' or 'valid', got {padding!r}")
    B, C, H, W = x.shape
    O, _, kh, kw = w.shape
    sh, sw = stride
    if padding == "valid" and (H < kh or W < kw):
        raise ShapeError(f"conv2d valid padding needs input >= kernel, got {x.shape} vs {w.shape}")
    ph0, ph1, Ho = _conv_pads(H, kh, sh, padding)
    pw0, pw1, Wo = _conv_pads(W, kw, sw, padding)
    xp = np.pad(x.data, ((0, 0), (0, 0), (ph0, ph1), (pw0, pw1)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    win = win[:, :, ::sh, ::sw]  # (B, C, Ho, Wo, kh, kw)
    out = np.einsum("bchwij,ocij->bohw", win, w.data, optimize=True)
    parents = [x, w]
    if b is not None:
        b = as_tensor(b)
        if b.shape != (O,):
            raise ShapeError(f"conv2d bias must be ({O},), got {b.shape}")
        out = out + b.data[:, None, None]
        parents.append(b)

    def bwd(g):
        dw = np.einsum("bchwij,bohw->ocij", win, g, optimize=True)
        dxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                dxp[:, :, i:i + sh * Ho:sh, j:j + sw * Wo:sw] += np.einsum(
                    "bohw,oc->bchw", g, w.data[:, :, i, j], optimize=True)
        dx = dxp[:, :, ph0:ph0 + H, pw0:pw0 + W]
        if b is not None:
            return dx, dw, g.sum(axis=(0, 2, 3))
        return dx, dw

    return make_result(out, "conv2d", tuple(parents), bwd)


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    out = x.data.reshape(shape)
    return make_result(out, "reshape", (x,), lambda g: (g.reshape(x.shape),))


def transpose(x, axes) -> Tensor:
    x = as_tensor(x)
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    out = np.transpose(x.data, axes)
    return make_result(out, "transpose", (x,), lambda g: (np.transpose(g, inv),))


def concat(parts, axis: int = 0) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    if not parts:
        raise ShapeError("concat of zero tensors")
    out = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        sl = [slice(None)] * g.ndim
        pieces = []
        for i in range(len(parts)):
            sl[axis] = slice(offsets[i], offsets[i + 1])
            pieces.append(g[tuple(sl)])
        return tuple(pieces)

    return make_result(out, "concat", tuple(parts), bwd)


def slice_(x, key) -> Tensor:
    """Basic indexing (slices / ints); gradient scatters back into place."""
    x = as_tensor(x)
    out = x.data[key]

    def bwd(g):
        dx = np.zeros_like(x.data)
        dx[key] = g
        return (dx,)

    return make_result(out, "slice", (x,), bwd)


def _restore_axes(g, shape, axis, keepdims):
    if axis is None:
        return np.broadcast_to(g, shape)
    if not keepdims:
        axes = axis if isinstance(axis, tuple) else (axis,)
        for ax in sorted(a % len(shape) for a in axes):
            g = np.expand_dims(g, ax)
    return np.broadcast_to(g, shape)


def sum_(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def bwd(g):
        return (_restore_axes(g, x.shape, axis, keepdims).copy(),)

    return make_result(np.asarray(out), "sum", (x,), bwd)


def mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    out = x.data.mean(axis=axis, keepdims=keepdims)
    n = x.data.size if axis is None else np.prod(
        [x.shape[a] for a in (axis if isinstance(axis, tuple) else (axis,))])

    def bwd(g):
        return (_restore_axes(g, x.shape, axis, keepdims) / x.dtype.type(n),)

    return make_result(np.asarray(out), "mean", (x,), bwd)


def sinusoidal_positions(length: int, dim: int) -> np.ndarray:
    """Fixed sine/cosine position table, shape (length, dim).

    Column 2i holds sin(pos / 10000^(2i/dim)), column 2i+1 the matching cos,
    so row 0 is [0, 1, 0, 1, ...].
    """
    if dim % 2 != 0:
        raise ContractError(f"position encoding dim must be even, got {dim}")
    pos = np.arange(length, dtype=np.float64)[:, None]
    i = np.arange(dim // 2, dtype=np.float64)[None, :]
    angles = pos / np.power(10000.0, 2.0 * i / dim)
    table = np.zeros((length, dim))
    table[:, 0::2] = np.sin(angles)
    table[:, 1::2] = np.cos(angles)
    return table.astype(default_dtype())
