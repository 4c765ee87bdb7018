"""SpecAugment-style time and frequency masking."""

from __future__ import annotations

import numpy as np

from .types import MelSpectrogram, SpecAugmentPolicy


def spec_augment(mel: MelSpectrogram, policy: SpecAugmentPolicy,
                 seed) -> MelSpectrogram:
    """Zero out random time and frequency stripes, reproducibly per seed.

    Widths are drawn uniformly from [0, max]; zero-width draws are no-ops,
    so the expected mask load stays modest on short utterances.
    """
    frames = mel.frames.copy()
    t, f = frames.shape
    if t == 0:
        return MelSpectrogram(frames, mel.sample_rate, mel.hop_length, mel.origin)
    rng = np.random.default_rng(seed)
    time_width_max = int(policy.time_mask_width_max_frac * t)
    for _ in range(policy.n_freq_masks):
        w = int(rng.integers(0, policy.freq_mask_width_max + 1))
        if w == 0 or w >= f:
            continue
        start = int(rng.integers(0, f - w + 1))
        frames[:, start:start + w] = policy.mask_value
    for _ in range(policy.n_time_masks):
        w = int(rng.integers(0, time_width_max + 1))
        if w == 0 or w >= t:
            continue
        start = int(rng.integers(0, t - w + 1))
        frames[start:start + w, :] = policy.mask_value
    return MelSpectrogram(frames, mel.sample_rate, mel.hop_length, mel.origin)
