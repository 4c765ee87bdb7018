"""Architecture hyperparameters and the named presets.

The two full-size presets differ only in auxiliary decoder depth, the
source tap layer, and (outside this type) training-schedule fields. The
toy preset shrinks every width so a complete training run fits in test
time on one CPU core.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass

from ..errors import ConfigError


@dataclass
class ModelConfig:
    src_phone_vocab: int
    tgt_phone_vocab: int
    enc_layers: int = 12
    enc_dim: int = 512
    enc_heads: int = 8
    ffn_dim: int = 2048
    subsample_channels: int = 512
    dec_layers: int = 6
    dec_dim: int = 512
    dec_heads: int = 8
    prenet_hidden: int = 256
    prenet_bottleneck: int = 32
    prenet_dropout: float = 0.5  # stays active even in eval mode
    reduction_factor: int = 4
    postnet_layers: int = 5
    postnet_channels: int = 512
    postnet_kernel: int = 5
    aux_src_layers: int = 1
    aux_tgt_layers: int = 1
    aux_dim: int = 64
    aux_heads: int = 4
    aux_ffn_dim: int = 256
    tap_src: int = 6
    tap_tgt: int = 9
    w_src: float = 0.3
    w_tgt: float = 0.3
    stop_pos_weight: float = 5.0
    label_smoothing: float = 0.1
    n_mels: int = 80
    dropout: float = 0.1
    prompt_enabled: bool = False
    prompt_at_input: bool = False  # 80-dim frame before the convs instead
    feat_offset: float = -9.5
    feat_scale: float = 5.75

    def __post_init__(self):
        if not 1 <= self.tap_src <= self.tap_tgt <= self.enc_layers:
            raise ConfigError(
                f"need 1 <= tap_src <= tap_tgt <= enc_layers, got "
                f"{self.tap_src}/{self.tap_tgt}/{self.enc_layers}")
        if self.reduction_factor < 1:
            raise ConfigError("reduction_factor must be >= 1")
        if min(self.w_src, self.w_tgt) < 0:
            raise ConfigError("loss weights must be non-negative")
        for name, dim, heads in (("enc", self.enc_dim, self.enc_heads),
                                 ("dec", self.dec_dim, self.dec_heads),
                                 ("aux", self.aux_dim, self.aux_heads)):
            if dim % heads != 0:
                raise ConfigError(
                    f"{name}_dim {dim} not divisible by {heads} heads")
        if self.n_mels != 80:
            raise ConfigError(f"n_mels is fixed at 80, got {self.n_mels}")
        if min(self.src_phone_vocab, self.tgt_phone_vocab) < 1:
            raise ConfigError("phone vocab sizes must be positive")
        if not 0.0 <= self.label_smoothing < 1.0:
            raise ConfigError("label_smoothing must lie in [0, 1)")
        if self.postnet_kernel < 1 or self.postnet_layers < 1:
            raise ConfigError("post-net needs at least one layer and k >= 1")
        if self.feat_scale <= 0:
            raise ConfigError("feat_scale must be positive")

    def fingerprint(self) -> str:
        doc = json.dumps(asdict(self), sort_keys=True)
        return hashlib.sha256(doc.encode("utf-8")).hexdigest()[:16]

    def replace(self, **kw) -> "ModelConfig":
        return ModelConfig(**{**asdict(self), **kw})


def fisher_config(src_phone_vocab: int, tgt_phone_vocab: int,
                  **overrides) -> ModelConfig:
    return ModelConfig(src_phone_vocab=src_phone_vocab,
                       tgt_phone_vocab=tgt_phone_vocab,
                       aux_src_layers=1, aux_tgt_layers=1,
                       tap_src=6, tap_tgt=9, **overrides)


def teden2zh_config(src_phone_vocab: int, tgt_phone_vocab: int,
                    **overrides) -> ModelConfig:
    return ModelConfig(src_phone_vocab=src_phone_vocab,
                       tgt_phone_vocab=tgt_phone_vocab,
                       aux_src_layers=4, aux_tgt_layers=4,
                       tap_src=4, tap_tgt=9, **overrides)


def toy_config(src_phone_vocab: int, tgt_phone_vocab: int,
               **overrides) -> ModelConfig:
    base = dict(enc_layers=2, enc_dim=64, enc_heads=4, ffn_dim=256,
                subsample_channels=16, dec_layers=2, dec_dim=64, dec_heads=4,
                prenet_hidden=64, prenet_bottleneck=32,
                postnet_layers=3, postnet_channels=64,
                aux_src_layers=1, aux_tgt_layers=1, aux_dim=32, aux_heads=4,
                aux_ffn_dim=128, tap_src=1, tap_tgt=2)
    base.update(overrides)
    return ModelConfig(src_phone_vocab=src_phone_vocab,
                       tgt_phone_vocab=tgt_phone_vocab, **base)
