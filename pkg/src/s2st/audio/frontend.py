"""Log-mel extraction and feature normalization.

Framing contract: frame t is centered on sample t*hop (reflect padding at
the edges) and the frame count is ceil(N / hop), so feature length maps
back to duration without an off-by-one at utterance boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ContractError, ShapeError
from .types import FrontendConfig, MelSpectrogram, Waveform


def reflect_pad(x: np.ndarray, left: int, right: int) -> np.ndarray:
    """Reflect extension that tolerates pads longer than the signal."""
    n = len(x)
    if n == 0:
        raise ContractError("cannot pad an empty signal")
    if n == 1:
        return np.full(left + 1 + right, x[0], dtype=x.dtype)
    idx = np.arange(-left, n + right)
    period = 2 * (n - 1)
    idx = np.mod(idx, period)
    idx = np.where(idx >= n, period - idx, idx)
    return x[idx]


def frame_signal(samples: np.ndarray, n_fft: int, hop: int) -> np.ndarray:
    """(T, n_fft) windows with frame t centered at sample t*hop."""
    n = len(samples)
    if n == 0:
        return np.zeros((0, n_fft), dtype=np.float64)
    t = int(np.ceil(n / hop))
    left = n_fft // 2
    need = (t - 1) * hop + n_fft
    right = max(0, need - (n + left))
    padded = reflect_pad(samples.astype(np.float64), left, right)
    starts = np.arange(t) * hop
    return padded[starts[:, None] + np.arange(n_fft)[None, :]]


def hann(n_fft: int) -> np.ndarray:
    # periodic Hann, the analysis convention matching FFT bin alignment
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n_fft) / n_fft)


def stft_power(samples: np.ndarray, n_fft: int, hop: int) -> np.ndarray:
    frames = frame_signal(samples, n_fft, hop) * hann(n_fft)[None, :]
    spec = np.fft.rfft(frames, axis=-1)
    return (spec.real ** 2 + spec.imag ** 2)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(cfg: FrontendConfig, sample_rate: int) -> np.ndarray:
    """(n_mels, n_fft//2 + 1) triangular filters on the mel scale."""
    fmax = cfg.effective_f_max(sample_rate)
    n_bins = cfg.n_fft // 2 + 1
    fft_freqs = np.arange(n_bins) * sample_rate / cfg.n_fft
    edges = mel_to_hz(np.linspace(hz_to_mel(cfg.f_min), hz_to_mel(fmax),
                                  cfg.n_mels + 2))
    fb = np.zeros((cfg.n_mels, n_bins))
    for m in range(cfg.n_mels):
        lo, mid, hi = edges[m], edges[m + 1], edges[m + 2]
        up = (fft_freqs - lo) / max(mid - lo, 1e-12)
        down = (hi - fft_freqs) / max(hi - mid, 1e-12)
        fb[m] = np.clip(np.minimum(up, down), 0.0, 1.0)
    return fb


def mel_spectrogram(wave: Waveform, cfg: FrontendConfig,
                    origin: str = "source") -> MelSpectrogram:
    """80-channel log-mel energies; silence maps to log(log_floor)."""
    if len(wave.samples) == 0:
        return MelSpectrogram(np.zeros((0, cfg.n_mels), dtype=np.float32),
                              wave.sample_rate, cfg.hop_length, origin)
    power = stft_power(wave.samples, cfg.n_fft, cfg.hop_length)
    fb = mel_filterbank(cfg, wave.sample_rate)
    mel = power @ fb.T
    logmel = np.log(np.maximum(mel, cfg.log_floor))
    return MelSpectrogram(logmel.astype(np.float32), wave.sample_rate,
                          cfg.hop_length, origin)


@dataclass
class CmvnStats:
    """Per-channel mean and variance used for cepstral-style normalization."""

    mean: np.ndarray
    var: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        self.var = np.asarray(self.var, dtype=np.float64).reshape(-1)
        if self.mean.shape != self.var.shape:
            raise ShapeError("mean/var length mismatch")
        if (self.var <= 0).any():
            raise ContractError("variance entries must be strictly positive")

    @classmethod
    def from_frames(cls, frames: np.ndarray, floor: float = 1e-8) -> "CmvnStats":
        f = np.asarray(frames, dtype=np.float64)
        if f.shape[0] == 0:
            raise ContractError("cannot estimate statistics from zero frames")
        return cls(f.mean(axis=0), np.maximum(f.var(axis=0), floor))


def cmvn_normalize(mel: MelSpectrogram, stats: CmvnStats) -> MelSpectrogram:
    if stats.mean.shape[0] != mel.frames.shape[1]:
        raise ShapeError(
            f"stats cover {stats.mean.shape[0]} channels, mel has "
            f"{mel.frames.shape[1]}")
    out = (mel.frames - stats.mean) / np.sqrt(stats.var)
    return MelSpectrogram(out.astype(np.float32), mel.sample_rate,
                          mel.hop_length, mel.origin)


def affine_normalize(frames: np.ndarray, offset: float, scale: float) -> np.ndarray:
    """Map raw log-mel into a training-friendly range: (x - offset) / scale."""
    if scale <= 0:
        raise ContractError("affine scale must be positive")
    return ((np.asarray(frames, dtype=np.float32) - offset) / scale).astype(np.float32)


def affine_denormalize(frames: np.ndarray, offset: float, scale: float) -> np.ndarray:
    if scale <= 0:
        raise ContractError("affine scale must be positive")
    return (np.asarray(frames, dtype=np.float32) * scale + offset).astype(np.float32)
