"""The direct speech-to-speech translation model.

One encoder feeds three decoders: the spectrogram decoder reads the
final layer, and two phoneme decoders read intermediate tapped layers
(source transcript and target translation). Prompt embeddings, when
enabled, prepend one learned token per utterance category.
"""

from __future__ import annotations

import enum

import numpy as np

from ..errors import ConfigError, ContractError
from ..nd import ops
from ..nd.nn import Dropout, Embedding, Module, RngBox
from ..nd.tensor import Tensor, as_tensor
from ..seeding import derive_rng
from .auxiliary import AuxDecoder
from .config import ModelConfig
from .decoder import DecoderOutput, SpectrogramDecoder
from .encoder import ConvSubsample, Encoder, EncoderStates


class PromptCategory(enum.Enum):
    primary = 0
    secondary = 1


def _prompt_ids(prompt, batch_size: int) -> np.ndarray:
    """Normalize a category, name, or per-sample sequence to (B,) row ids."""
    def one(p) -> int:
        if isinstance(p, PromptCategory):
            return p.value
        if isinstance(p, str):
            try:
                return PromptCategory[p].value
            except KeyError:
                raise ContractError(f"unknown prompt category {p!r}") from None
        if isinstance(p, (int, np.integer)) and int(p) in (0, 1):
            return int(p)
        raise ContractError(f"unknown prompt category {p!r}")

    if isinstance(prompt, (PromptCategory, str, int, np.integer)):
        return np.full(batch_size, one(prompt), dtype=np.int64)
    ids = np.asarray([one(p) for p in prompt], dtype=np.int64)
    if ids.shape != (batch_size,):
        raise ContractError(
            f"need one prompt per sample: got {ids.shape[0]} for batch "
            f"{batch_size}")
    return ids


class S2STModel(Module):
    def __init__(self, cfg: ModelConfig, seed: int = 0):
        self.cfg = cfg
        rng = derive_rng("model-init", seed)
        self.box = RngBox(derive_rng("model-dropout", seed))
        self.subsample = ConvSubsample(cfg.n_mels, cfg.enc_dim,
                                       cfg.subsample_channels, rng)
        # both prompt tables always exist so parameter shapes depend only
        # on the config sizes, not on whether prompting is switched on
        self.prompt_embed = Embedding(2, cfg.enc_dim, rng)
        self.input_prompt_embed = Embedding(2, cfg.n_mels, rng)
        self.encoder = Encoder(cfg.enc_layers, cfg.enc_dim, cfg.enc_heads,
                               cfg.ffn_dim, rng, self.box, cfg.dropout)
        self.spec_decoder = SpectrogramDecoder(
            cfg.n_mels, cfg.dec_dim, cfg.dec_layers, cfg.dec_heads,
            cfg.ffn_dim, cfg.enc_dim, cfg.prenet_hidden, cfg.prenet_bottleneck,
            cfg.prenet_dropout, cfg.reduction_factor, cfg.postnet_channels,
            cfg.postnet_layers, cfg.postnet_kernel, rng, self.box, cfg.dropout)
        self.aux_src = AuxDecoder(cfg.src_phone_vocab, cfg.aux_src_layers,
                                  cfg.aux_dim, cfg.aux_heads, cfg.aux_ffn_dim,
                                  cfg.enc_dim, rng, self.box, cfg.dropout)
        self.aux_tgt = AuxDecoder(cfg.tgt_phone_vocab, cfg.aux_tgt_layers,
                                  cfg.aux_dim, cfg.aux_heads, cfg.aux_ffn_dim,
                                  cfg.enc_dim, rng, self.box, cfg.dropout)

    # -- configuration plumbing ---------------------------------------------

    def fingerprint(self) -> str:
        return self.cfg.fingerprint()

    def set_dropout(self, p: float) -> None:
        """Retarget every dropout module; pre-net dropout is fixed at 0.5."""
        for m in self.modules():
            if isinstance(m, Dropout):
                m.p = float(p)

    def reseed_dropout(self, seed_parts) -> None:
        self.box.reseed(derive_rng(*seed_parts))

    # -- forward paths -------------------------------------------------------

    def encode(self, mel, mask: np.ndarray, prompt=None) -> EncoderStates:
        mel = as_tensor(mel)
        if mel.ndim == 2:
            mel = ops.reshape(mel, (1,) + mel.shape)
        b = mel.shape[0]
        mask = np.asarray(mask, dtype=bool)
        if mask.ndim == 1:
            mask = mask[None, :]
        if mask.shape != mel.shape[:2]:
            raise ContractError(
                f"mask {mask.shape} does not cover input {mel.shape[:2]}")

        if prompt is not None:
            if not self.cfg.prompt_enabled:
                raise ConfigError(
                    "prompt passed but the model was built with "
                    "prompt_enabled=false")
            ids = _prompt_ids(prompt, b)
            if self.cfg.prompt_at_input:
                tok = ops.reshape(self.input_prompt_embed(ids),
                                  (b, 1, self.cfg.n_mels))
                mel = ops.concat([tok, mel], axis=1)
                mask = np.concatenate(
                    [np.ones((b, 1), dtype=bool), mask], axis=1)
                x, sub_mask = self.subsample(mel, mask)
            else:
                x, sub_mask = self.subsample(mel, mask)
                tok = ops.reshape(self.prompt_embed(ids),
                                  (b, 1, self.cfg.enc_dim))
                x = ops.concat([tok, x], axis=1)
                sub_mask = np.concatenate(
                    [np.ones((b, 1), dtype=bool), sub_mask], axis=1)
        else:
            x, sub_mask = self.subsample(mel, mask)

        states = self.encoder(x, sub_mask)
        if len(states.states) != self.cfg.enc_layers:
            raise ContractError("encoder state count drifted from config")
        return states

    def decode_spectrogram_teacher_forced(self, enc: EncoderStates,
                                          tgt_mel) -> DecoderOutput:
        return self.spec_decoder.teacher_forced(enc, np.asarray(tgt_mel))

    def decode_auxiliary_teacher_forced(self, enc: EncoderStates, which: str,
                                        phones, phone_mask=None) -> Tensor:
        if which == "source":
            tap, dec = self.cfg.tap_src, self.aux_src
        elif which == "target":
            tap, dec = self.cfg.tap_tgt, self.aux_tgt
        else:
            raise ContractError(f"which must be source/target, got {which!r}")
        tapped = enc.states[tap - 1]
        return dec(tapped, enc.mask, np.asarray(phones), phone_mask)

    def infer_spectrogram(self, enc: EncoderStates, stop_threshold: float = 0.5,
                          max_steps: int = 200):
        return self.spec_decoder.infer(enc, stop_threshold, max_steps)
