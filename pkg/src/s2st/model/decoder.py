"""Spectrogram decoder: pre-net bottleneck, causal Transformer, post-net.

Target frames are consumed in groups of `reduction_factor`; each decoder
step is fed the last frame of the previous group (a zero frame for step
0) and predicts the next group plus one stop logit. The post-net is a
causal convolution stack so the whole output respects step causality.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ContractError, ShapeError
from ..nd import ops
from ..nd.nn import (Conv2d, Dropout, FeedForward, LayerNorm, Linear, Module,
                     MultiHeadAttention, RngBox)
from ..nd.tensor import Tensor, as_tensor, default_dtype, no_grad
from .encoder import EncoderStates


@dataclass
class DecoderOutput:
    mel_before: Tensor  # (B, T_out, n_mels)
    mel_after: Tensor   # (B, T_out, n_mels), post-net residual added
    stop_logits: Tensor  # (B, ceil(T_out / r))

    def __post_init__(self):
        if self.mel_before.shape != self.mel_after.shape:
            raise ShapeError("pre/post post-net mels disagree on shape")


class PreNet(Module):
    """Two bottleneck layers whose dropout stays active even in eval mode."""

    def __init__(self, n_mels: int, hidden: int, bottleneck: int, out_dim: int,
                 rng: np.random.Generator, box: RngBox, p: float):
        self.lin1 = Linear(n_mels, hidden, rng)
        self.lin2 = Linear(hidden, bottleneck, rng)
        self.proj = Linear(bottleneck, out_dim, rng)
        self.box = box
        self.p = float(p)

    def __call__(self, x) -> Tensor:
        x = ops.dropout(ops.relu(self.lin1(x)), self.p, self.box.rng, True)
        x = ops.dropout(ops.relu(self.lin2(x)), self.p, self.box.rng, True)
        return self.proj(x)


class TransformerDecoderLayer(Module):
    """Pre-norm block: causal self-attention, cross-attention, feed-forward."""

    def __init__(self, dim: int, n_heads: int, ffn_dim: int, kv_dim: int,
                 rng: np.random.Generator, box: RngBox, dropout: float):
        self.ln1 = LayerNorm(dim)
        self.self_attn = MultiHeadAttention(dim, n_heads, rng, box)
        self.drop1 = Dropout(dropout, box)
        self.ln2 = LayerNorm(dim)
        self.cross_attn = MultiHeadAttention(dim, n_heads, rng, box,
                                             kv_dim=kv_dim)
        self.drop2 = Dropout(dropout, box)
        self.ln3 = LayerNorm(dim)
        self.ffn = FeedForward(dim, ffn_dim, rng, box, dropout)
        self.drop3 = Dropout(dropout, box)

    def __call__(self, x: Tensor, self_mask, memory: Tensor,
                 cross_mask) -> Tensor:
        h = self.ln1(x)
        x = ops.add(x, self.drop1(self.self_attn(h, h, h, self_mask)))
        x = ops.add(x, self.drop2(
            self.cross_attn(self.ln2(x), memory, memory, cross_mask)))
        x = ops.add(x, self.drop3(self.ffn(self.ln3(x))))
        return x


class CausalConv1d(Module):
    """1-d convolution over time that never reads frames to its right."""

    def __init__(self, c_in: int, c_out: int, k: int,
                 rng: np.random.Generator):
        self.conv = Conv2d(c_in, c_out, (1, k), rng, stride=(1, 1),
                           padding="valid")
        self.k = k

    def __call__(self, x: Tensor) -> Tensor:
        b, t, c = x.shape
        if self.k > 1:
            pad = np.zeros((b, self.k - 1, c), dtype=default_dtype())
            x = ops.concat([as_tensor(pad), x], axis=1)
        x = ops.reshape(ops.transpose(x, (0, 2, 1)), (b, c, 1, t + self.k - 1))
        y = self.conv(x)
        c_out = y.shape[1]
        return ops.transpose(ops.reshape(y, (b, c_out, t)), (0, 2, 1))


class PostNet(Module):
    """Convolution stack; output is the residual added onto mel_before."""

    def __init__(self, n_mels: int, channels: int, n_layers: int, k: int,
                 rng: np.random.Generator, box: RngBox, dropout: float):
        widths = [n_mels] + [channels] * (n_layers - 1) + [n_mels]
        self.convs = [CausalConv1d(widths[i], widths[i + 1], k, rng)
                      for i in range(n_layers)]
        self.drop = Dropout(dropout, box)

    def __call__(self, x: Tensor) -> Tensor:
        for conv in self.convs[:-1]:
            x = self.drop(ops.tanh(conv(x)))
        return self.convs[-1](x)


def step_inputs(tgt_mel: np.ndarray, r: int) -> np.ndarray:
    """Zero frame, then the last frame of each target group but the final."""
    b, t, m = tgt_mel.shape
    last = tgt_mel[:, r - 1::r, :]
    go = np.zeros((b, 1, m), dtype=tgt_mel.dtype)
    return np.concatenate([go, last[:, :-1]], axis=1)


class SpectrogramDecoder(Module):
    def __init__(self, n_mels: int, dim: int, n_layers: int, n_heads: int,
                 ffn_dim: int, enc_dim: int, prenet_hidden: int,
                 prenet_bottleneck: int, prenet_dropout: float, r: int,
                 postnet_channels: int, postnet_layers: int, postnet_kernel: int,
                 rng: np.random.Generator, box: RngBox, dropout: float):
        self.n_mels = n_mels
        self.dim = dim
        self.r = r
        self.prenet = PreNet(n_mels, prenet_hidden, prenet_bottleneck, dim,
                             rng, box, prenet_dropout)
        self.layers = [TransformerDecoderLayer(dim, n_heads, ffn_dim, enc_dim,
                                               rng, box, dropout)
                       for _ in range(n_layers)]
        self.final_norm = LayerNorm(dim)
        self.frame_proj = Linear(dim, r * n_mels, rng)
        self.stop_proj = Linear(dim, 1, rng)
        self.postnet = PostNet(n_mels, postnet_channels, postnet_layers,
                               postnet_kernel, rng, box, dropout)

    def _run_steps(self, inputs: np.ndarray, enc: EncoderStates):
        b, s, _ = inputs.shape
        x = self.prenet(as_tensor(inputs))
        pos = ops.sinusoidal_positions(s, self.dim)
        x = ops.add(ops.mul(x, math.sqrt(self.dim)), pos)
        self_mask = np.tril(np.ones((s, s), dtype=bool))
        t_enc = enc.mask.shape[1]
        cross_mask = np.broadcast_to(enc.mask[:, None, :], (b, s, t_enc))
        for layer in self.layers:
            x = layer(x, self_mask, enc.memory, cross_mask)
        h = self.final_norm(x)
        frames = ops.reshape(self.frame_proj(h), (b, s * self.r, self.n_mels))
        stops = ops.reshape(self.stop_proj(h), (b, s))
        return frames, stops

    def teacher_forced(self, enc: EncoderStates,
                       tgt_mel: np.ndarray) -> DecoderOutput:
        tgt_mel = np.asarray(tgt_mel)
        if tgt_mel.ndim != 3 or tgt_mel.shape[2] != self.n_mels:
            raise ShapeError(f"expected (B, T, {self.n_mels}) target, got "
                             f"{tgt_mel.shape}")
        b, t, _ = tgt_mel.shape
        if t == 0:
            raise ContractError("empty target spectrogram")
        if t % self.r:
            raise ContractError(
                f"target length {t} not divisible by reduction factor "
                f"{self.r}; pad it (flagging pad frames) first")
        mel_before, stops = self._run_steps(step_inputs(tgt_mel, self.r), enc)
        mel_after = ops.add(mel_before, self.postnet(mel_before))
        return DecoderOutput(mel_before, mel_after, stops)

    def infer(self, enc: EncoderStates, stop_threshold: float,
              max_steps: int):
        """Autoregressive decode for a single utterance (batch of one)."""
        if max_steps < 1:
            raise ContractError("max_steps must be >= 1")
        if enc.mask.shape[0] != 1:
            raise ContractError("inference decodes one utterance at a time")
        with no_grad():
            frames = np.zeros((1, 0, self.n_mels), dtype=default_dtype())
            stopped = False
            for step in range(max_steps):
                inputs = step_inputs(
                    np.concatenate(
                        [frames,
                         np.zeros((1, self.r, self.n_mels),
                                  dtype=default_dtype())], axis=1), self.r)
                out, stops = self._run_steps(inputs, enc)
                frames = np.concatenate(
                    [frames, out.data[:, step * self.r:(step + 1) * self.r]],
                    axis=1)
                logit = float(stops.data[0, step])
                if 1.0 / (1.0 + math.exp(-logit)) > stop_threshold:
                    stopped = True
                    break
            post = self.postnet(as_tensor(frames))
            mel = frames + post.data
        return mel[0], stopped
