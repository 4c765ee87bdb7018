"""Waveform and spectrogram value types shared across the audio stack."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, ContractError, ShapeError

N_MELS = 80

ORIGINS = ("source", "target", "predicted")


@dataclass
class Waveform:
    """Mono audio: float samples in [-1, 1] plus their sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float32).reshape(-1)
        if not np.isfinite(self.samples).all():
            raise ContractError("waveform contains non-finite samples")
        if np.abs(self.samples).max(initial=0.0) > 1.0 + 1e-6:
            raise ContractError("waveform samples exceed [-1, 1]")
        if int(self.sample_rate) <= 0:
            raise ContractError(f"sample_rate must be positive, got {self.sample_rate}")
        self.sample_rate = int(self.sample_rate)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass
class MelSpectrogram:
    """T x 80 log-mel energies with the framing used to produce them."""

    frames: np.ndarray
    sample_rate: int
    hop_length: int
    origin: str = "source"

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float32)
        if self.frames.ndim != 2 or self.frames.shape[1] != N_MELS:
            raise ShapeError(
                f"mel frames must be (T, {N_MELS}), got {self.frames.shape}")
        if not np.isfinite(self.frames).all():
            raise ContractError("mel spectrogram contains non-finite entries")
        if self.origin not in ORIGINS:
            raise ContractError(f"origin must be one of {ORIGINS}, got {self.origin!r}")

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]


@dataclass
class FrontendConfig:
    """Analysis parameters; defaults follow 25 ms windows with 10 ms hops."""

    n_fft: int
    hop_length: int
    n_mels: int = N_MELS
    f_min: float = 0.0
    f_max: float | None = None  # None means Nyquist at extraction time
    log_floor: float = 1e-10

    def __post_init__(self):
        if self.hop_length > self.n_fft:
            raise ConfigError(
                f"hop_length {self.hop_length} exceeds n_fft {self.n_fft}")
        if self.n_mels != N_MELS:
            raise ConfigError(f"n_mels must be {N_MELS}, got {self.n_mels}")
        if self.log_floor <= 0:
            raise ConfigError("log_floor must be positive")

    @classmethod
    def for_rate(cls, sample_rate: int) -> "FrontendConfig":
        """25 ms / 10 ms framing expressed in samples at the given rate."""
        return cls(n_fft=int(round(0.025 * sample_rate)),
                   hop_length=int(round(0.010 * sample_rate)))

    def effective_f_max(self, sample_rate: int) -> float:
        fmax = self.f_max if self.f_max is not None else sample_rate / 2.0
        if fmax > sample_rate / 2.0 + 1e-9:
            raise ConfigError(f"f_max {fmax} above Nyquist for rate {sample_rate}")
        return fmax


@dataclass
class SpecAugmentPolicy:
    freq_mask_width_max: int = 27
    n_freq_masks: int = 2
    time_mask_width_max_frac: float = 0.05  # of T, per mask
    n_time_masks: int = 2
    mask_value: float = 0.0

    def __post_init__(self):
        if min(self.freq_mask_width_max, self.n_freq_masks, self.n_time_masks) < 0:
            raise ConfigError("mask counts and widths must be non-negative")
        if self.time_mask_width_max_frac < 0:
            raise ConfigError("time mask fraction must be non-negative")
        if self.freq_mask_width_max > N_MELS:
            raise ConfigError(f"freq mask width above {N_MELS}")
