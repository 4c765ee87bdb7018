"""Speech encoder: two stride-2 convolutions, then a Transformer stack.

Every layer's hidden state is retained so the auxiliary phoneme decoders
can cross-attend intermediate representations; the spectrogram decoder
reads the final state through one shared LayerNorm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ShapeError
from ..nd import ops
from ..nd.nn import (Conv2d, Dropout, FeedForward, LayerNorm, Linear, Module,
                     MultiHeadAttention, RngBox)
from ..nd.tensor import Tensor, as_tensor, default_dtype


@dataclass
class EncoderStates:
    """Per-layer hidden states (each B x T' x enc_dim) plus the mask.

    `memory` is the last state after the stack's closing LayerNorm; the
    raw per-layer entries in `states` are what the auxiliary taps see.
    """

    states: list
    mask: np.ndarray  # (B, T') bool, True = attendable
    memory: Tensor

    def __post_init__(self):
        if not self.states:
            raise ShapeError("encoder produced no layer states")
        t = self.states[0].shape[1]
        if any(s.shape[1] != t for s in self.states):
            raise ShapeError("encoder layer states disagree on length")
        if self.mask.shape != self.states[0].shape[:2]:
            raise ShapeError(
                f"mask {self.mask.shape} does not match states "
                f"{self.states[0].shape[:2]}")


def subsampled_length(n: int) -> int:
    # two ceil-halvings collapse to one ceil-quartering for integers
    return (n + 3) // 4


class ConvSubsample(Module):
    """(B, T, n_mels) -> (B, ceil(T/4), out_dim) via two stride-2 convs."""

    def __init__(self, n_mels: int, out_dim: int, channels: int,
                 rng: np.random.Generator):
        self.conv1 = Conv2d(1, channels, (3, 3), rng, stride=(2, 2),
                            padding="same")
        self.conv2 = Conv2d(channels, channels, (3, 3), rng, stride=(2, 2),
                            padding="same")
        freq = subsampled_length(n_mels)
        self.proj = Linear(channels * freq, out_dim, rng)
        self._flat = channels * freq

    def __call__(self, mel, mask: np.ndarray):
        mel = as_tensor(mel)
        if mel.ndim != 3:
            raise ShapeError(f"expected (B, T, n_mels), got {mel.shape}")
        b, t, m = mel.shape
        if t == 0:
            raise ShapeError("cannot subsample an empty spectrogram (T=0)")
        x = ops.reshape(mel, (b, 1, t, m))
        x = ops.relu(self.conv1(x))
        x = ops.relu(self.conv2(x))
        _, c, t_sub, f_sub = x.shape
        x = ops.transpose(x, (0, 2, 1, 3))
        x = ops.reshape(x, (b, t_sub, c * f_sub))
        x = self.proj(x)

        lengths = np.asarray(mask, dtype=bool).sum(axis=1)
        sub_mask = np.zeros((b, t_sub), dtype=bool)
        for i, n in enumerate(lengths):
            sub_mask[i, :subsampled_length(int(n))] = True
        return x, sub_mask


class TransformerEncoderLayer(Module):
    def __init__(self, dim: int, n_heads: int, ffn_dim: int,
                 rng: np.random.Generator, box: RngBox, dropout: float):
        self.ln1 = LayerNorm(dim)
        self.attn = MultiHeadAttention(dim, n_heads, rng, box)
        self.drop1 = Dropout(dropout, box)
        self.ln2 = LayerNorm(dim)
        self.ffn = FeedForward(dim, ffn_dim, rng, box, dropout)
        self.drop2 = Dropout(dropout, box)

    def __call__(self, x: Tensor, attn_mask) -> Tensor:
        h = self.ln1(x)
        x = ops.add(x, self.drop1(self.attn(h, h, h, attn_mask)))
        x = ops.add(x, self.drop2(self.ffn(self.ln2(x))))
        return x


class Encoder(Module):
    """Pre-norm Transformer stack over subsampled (+ optional prompt) input."""

    def __init__(self, n_layers: int, dim: int, n_heads: int, ffn_dim: int,
                 rng: np.random.Generator, box: RngBox, dropout: float):
        self.dim = dim
        self.layers = [TransformerEncoderLayer(dim, n_heads, ffn_dim, rng, box,
                                               dropout)
                       for _ in range(n_layers)]
        self.final_norm = LayerNorm(dim)
        self.in_drop = Dropout(dropout, box)

    def __call__(self, x: Tensor, mask: np.ndarray) -> EncoderStates:
        b, t, d = x.shape
        pos = ops.sinusoidal_positions(t, d)
        x = ops.add(ops.mul(x, math.sqrt(d)), pos)
        x = self.in_drop(x)
        attn_mask = np.broadcast_to(mask[:, None, :], (b, t, t))
        states = []
        for layer in self.layers:
            x = layer(x, attn_mask)
            states.append(x)
        return EncoderStates(states, mask, self.final_norm(x))
