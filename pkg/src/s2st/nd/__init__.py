"""Reverse-mode autodiff engine: tensors, primitives, layers, checks."""

from . import ops
from .gradcheck import GradReport, finite_diff_check
from .nn import (Conv2d, Dropout, Embedding, FeedForward, LayerNorm, Linear,
                 Module, MultiHeadAttention, RngBox, uniform_init)
from .serialize import pack_named, unpack_named
from .tensor import (Grads, Parameter, Tensor, as_tensor, backward,
                     default_dtype, grad_enabled, no_grad, tensor, use_dtype)

__all__ = [
    "Conv2d", "Dropout", "Embedding", "FeedForward", "GradReport", "Grads",
    "LayerNorm", "Linear", "Module", "MultiHeadAttention", "Parameter",
    "RngBox", "Tensor", "as_tensor", "backward", "default_dtype",
    "finite_diff_check", "grad_enabled", "no_grad", "ops", "pack_named",
    "tensor", "unpack_named", "uniform_init", "use_dtype",
]
