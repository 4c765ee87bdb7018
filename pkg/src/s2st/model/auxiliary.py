"""Auxiliary phoneme decoders cross-attending one tapped encoder layer."""

from __future__ import annotations

import math

import numpy as np

from ..errors import ShapeError
from ..nd import ops
from ..nd.nn import Embedding, LayerNorm, Linear, Module, RngBox
from ..nd.tensor import Tensor
from .decoder import TransformerDecoderLayer


class AuxDecoder(Module):
    """Autoregressive phone predictor over one encoder layer's states."""

    def __init__(self, vocab_size: int, n_layers: int, dim: int, n_heads: int,
                 ffn_dim: int, enc_dim: int, rng: np.random.Generator,
                 box: RngBox, dropout: float):
        self.vocab_size = vocab_size
        self.dim = dim
        self.embed = Embedding(vocab_size, dim, rng)
        self.layers = [TransformerDecoderLayer(dim, n_heads, ffn_dim, enc_dim,
                                               rng, box, dropout)
                       for _ in range(n_layers)]
        self.final_norm = LayerNorm(dim)
        self.out = Linear(dim, vocab_size, rng)

    def __call__(self, tapped: Tensor, tap_mask: np.ndarray,
                 ids: np.ndarray, id_mask: np.ndarray | None = None) -> Tensor:
        ids = np.asarray(ids)
        if ids.ndim != 2:
            raise ShapeError(f"expected (B, L) phone ids, got {ids.shape}")
        b, length = ids.shape
        if id_mask is None:
            id_mask = np.ones((b, length), dtype=bool)
        x = self.embed(ids)
        pos = ops.sinusoidal_positions(length, self.dim)
        x = ops.add(ops.mul(x, math.sqrt(self.dim)), pos)
        causal = np.tril(np.ones((length, length), dtype=bool))
        self_mask = causal[None, :, :] & np.asarray(id_mask, bool)[:, None, :]
        t_enc = tap_mask.shape[1]
        cross_mask = np.broadcast_to(tap_mask[:, None, :], (b, length, t_enc))
        for layer in self.layers:
            x = layer(x, self_mask, tapped, cross_mask)
        return self.out(self.final_norm(x))
