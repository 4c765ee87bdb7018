"""Sample-rate conversion via polyphase filtering."""

from __future__ import annotations

import math

import numpy as np
from scipy.signal import resample_poly

from ..errors import ContractError
from .types import Waveform


def resample(wave: Waveform, target_sr: int) -> Waveform:
    if target_sr <= 0:
        raise ContractError(f"target sample rate must be positive, got {target_sr}")
    if target_sr == wave.sample_rate:
        return Waveform(wave.samples.copy(), wave.sample_rate)
    g = math.gcd(target_sr, wave.sample_rate)
    up, down = target_sr // g, wave.sample_rate // g
    out = resample_poly(wave.samples.astype(np.float64), up, down)
    # anti-alias ringing can push slightly past full scale; clamp, not rescale
    out = np.clip(out, -1.0, 1.0)
    return Waveform(out.astype(np.float32), target_sr)
