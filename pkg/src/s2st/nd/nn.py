"""Layers and the module tree used by the translation model.

Parameters live on Module attributes; named_parameters() derives stable
hierarchical names from attribute paths, which the checkpoint format and
the optimizer rely on. Initialization is fan-scaled uniform for weights
(normal for embedding rows) and fully determined by the generator passed
to each constructor.
"""

from __future__ import annotations

import numpy as np

from ..errors import MaskError, ShapeError
from . import ops
from .tensor import Parameter, Tensor, default_dtype


class RngBox:
    """Shared mutable handle for the step-level dropout generator.

    The trainer reseeds it once per step so dropout draws are a pure
    function of (stage seed, step); modules hold a reference, not a copy.
    """

    def __init__(self, rng: np.random.Generator | None = None):
        self.rng = rng if rng is not None else np.random.default_rng(0)

    def reseed(self, seed_seq) -> None:
        self.rng = np.random.default_rng(seed_seq)


def uniform_init(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape).astype(default_dtype())


class Module:
    """Minimal module tree: parameter discovery, train/eval mode."""

    _training = True

    def children(self):
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield f"{name}.{i}", item

    def modules(self):
        yield self
        for _, child in self.children():
            yield from child.modules()

    def named_parameters(self, prefix: str = ""):
        for name, value in vars(self).items():
            if isinstance(value, Parameter):
                yield (prefix + name, value)
        for name, child in self.children():
            yield from child.named_parameters(prefix + name + ".")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def train(self, mode: bool = True):
        for m in self.modules():
            m._training = mode
        return self

    def eval(self):
        return self.train(False)


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, bias: bool = True):
        self.weight = Parameter(uniform_init(rng, (n_in, n_out), n_in, n_out))
        self.bias = Parameter(np.zeros(n_out, dtype=default_dtype())) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = ops.matmul(x, self.weight)
        if self.bias is not None:
            y = ops.add(y, self.bias)
        return y


class Embedding(Module):
    def __init__(self, n_rows: int, dim: int, rng: np.random.Generator):
        scale = dim ** -0.5
        self.weight = Parameter((rng.standard_normal((n_rows, dim)) * scale)
                                .astype(default_dtype()))

    def __call__(self, ids) -> Tensor:
        return ops.embedding_lookup(self.weight, ids)


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        self.gain = Parameter(np.ones(dim, dtype=default_dtype()))
        self.bias = Parameter(np.zeros(dim, dtype=default_dtype()))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return ops.layer_norm(x, self.gain, self.bias, self.eps)


class Dropout(Module):
    def __init__(self, p: float, box: RngBox):
        self.p = p
        self.box = box

    def __call__(self, x: Tensor) -> Tensor:
        return ops.dropout(x, self.p, self.box.rng, self._training)


class MultiHeadAttention(Module):
    """Scaled dot-product attention with head split and output projection.

    Queries have `dim` features; keys/values may come from a different
    width (`kv_dim`), e.g. auxiliary decoders attending wide encoder
    states. `mask` marks attendable key positions with True and may be
    (T_q, T_k), (B, T_q, T_k), or any shape broadcastable over scores.
    """

    def __init__(self, dim: int, n_heads: int, rng: np.random.Generator,
                 box: RngBox, kv_dim: int | None = None, attn_dropout: float = 0.0):
        if dim % n_heads != 0:
            raise ShapeError(f"model dim {dim} not divisible by {n_heads} heads")
        kv_dim = kv_dim if kv_dim is not None else dim
        self.n_heads = n_heads
        self.d_head = dim // n_heads
        self.wq = Linear(dim, dim, rng)
        self.wk = Linear(kv_dim, dim, rng)
        self.wv = Linear(kv_dim, dim, rng)
        self.wo = Linear(dim, dim, rng)
        self.drop = Dropout(attn_dropout, box)

    def __call__(self, q: Tensor, k: Tensor, v: Tensor, mask=None) -> Tensor:
        B, Tq, D = q.shape
        Tk = k.shape[1]
        h, dh = self.n_heads, self.d_head

        def split(t, T):
            t = ops.reshape(t, (B, T, h, dh))
            return ops.transpose(t, (0, 2, 1, 3))  # (B, h, T, dh)

        qh = split(self.wq(q), Tq)
        kh = split(self.wk(k), Tk)
        vh = split(self.wv(v), Tk)
        scores = ops.matmul(qh, ops.transpose(kh, (0, 1, 3, 2)))
        scores = ops.mul(scores, 1.0 / np.sqrt(dh))
        if mask is not None:
            m = np.asarray(mask, dtype=bool)
            if m.ndim == 2:
                m = m[None, None, :, :]
            elif m.ndim == 3:
                m = m[:, None, :, :]
            if not np.logical_or.reduce(m, axis=-1).all():
                raise MaskError("attention row with every key masked")
            neg = np.where(m, 0.0, -1e9).astype(scores.dtype)
            scores = ops.add(scores, neg)
        attn = ops.softmax(scores, axis=-1)
        attn = self.drop(attn)
        ctx = ops.matmul(attn, vh)  # (B, h, Tq, dh)
        ctx = ops.reshape(ops.transpose(ctx, (0, 2, 1, 3)), (B, Tq, D))
        return self.wo(ctx)


class FeedForward(Module):
    def __init__(self, dim: int, hidden: int, rng: np.random.Generator,
                 box: RngBox, dropout: float):
        self.lin1 = Linear(dim, hidden, rng)
        self.lin2 = Linear(hidden, dim, rng)
        self.drop = Dropout(dropout, box)

    def __call__(self, x: Tensor) -> Tensor:
        return self.lin2(self.drop(ops.relu(self.lin1(x))))


class Conv2d(Module):
    def __init__(self, c_in: int, c_out: int, kernel: tuple[int, int],
                 rng: np.random.Generator, stride: tuple[int, int] = (1, 1),
                 padding: str = "same"):
        kh, kw = kernel
        fan_in = c_in * kh * kw
        fan_out = c_out * kh * kw
        self.weight = Parameter(uniform_init(rng, (c_out, c_in, kh, kw), fan_in, fan_out))
        self.bias = Parameter(np.zeros(c_out, dtype=default_dtype()))
        self.stride = stride
        self.padding = padding

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.weight, self.bias, self.stride, self.padding)
