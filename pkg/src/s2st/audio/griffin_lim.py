"""Spectrogram inversion for listening checks and transcription-based scoring.

Log-mel is lifted back to a linear magnitude spectrogram through the
pseudo-inverse of the mel filterbank, then phase is recovered by the
classic iterate-and-reproject scheme. Quality is deliberately modest; the
contract is a finite, duration-preserving waveform whose re-extracted
log-mel correlates with the input.
"""

from __future__ import annotations

import numpy as np

from ..errors import ContractError
from .frontend import frame_signal, hann, mel_filterbank
from .types import FrontendConfig, MelSpectrogram, Waveform


def _istft(spec: np.ndarray, n_fft: int, hop: int, out_len: int) -> np.ndarray:
    """Weighted overlap-add inverse of the centered framing."""
    t = spec.shape[0]
    win = hann(n_fft)
    frames = np.fft.irfft(spec, n=n_fft, axis=-1) * win[None, :]
    left = n_fft // 2
    total = (t - 1) * hop + n_fft
    num = np.zeros(total)
    den = np.zeros(total)
    wsq = win ** 2
    for i in range(t):
        s = i * hop
        num[s:s + n_fft] += frames[i]
        den[s:s + n_fft] += wsq
    y = np.where(den > 1e-8, num / np.maximum(den, 1e-8), 0.0)
    y = y[left:left + out_len]
    if len(y) < out_len:
        y = np.pad(y, (0, out_len - len(y)))
    return y


def griffin_lim_invert(mel: MelSpectrogram, cfg: FrontendConfig,
                       iterations: int = 60) -> Waveform:
    if iterations < 0:
        raise ContractError("iterations must be non-negative")
    t = mel.n_frames
    out_len = t * cfg.hop_length
    if t == 0:
        return Waveform(np.zeros(0, dtype=np.float32), mel.sample_rate)

    fb = mel_filterbank(cfg, mel.sample_rate)
    mel_power = np.exp(mel.frames.astype(np.float64))
    mel_power[mel_power <= cfg.log_floor * 1.0001] = 0.0  # silence floor back to zero
    lin_power = np.clip(mel_power @ np.linalg.pinv(fb).T, 0.0, None)
    mag = np.sqrt(lin_power)

    # zero-phase start, then alternate projections onto the magnitude
    # constraint and the set of consistent spectrograms
    spec = mag.astype(np.complex128)
    y = _istft(spec, cfg.n_fft, cfg.hop_length, out_len)
    win = hann(cfg.n_fft)
    for _ in range(iterations):
        re = np.fft.rfft(frame_signal(y, cfg.n_fft, cfg.hop_length) * win[None, :],
                         axis=-1)
        phase = np.where(np.abs(re) > 1e-12, re / np.maximum(np.abs(re), 1e-12), 1.0)
        y = _istft(mag * phase, cfg.n_fft, cfg.hop_length, out_len)

    peak = np.abs(y).max(initial=0.0)
    if peak > 0.99:
        y = y * (0.99 / peak)
    return Waveform(y.astype(np.float32), mel.sample_rate)
