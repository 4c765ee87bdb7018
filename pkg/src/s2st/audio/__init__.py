"""Waveform I/O, log-mel features, augmentation, inversion, resampling."""

from .augment import spec_augment
from .frontend import (CmvnStats, affine_denormalize, affine_normalize,
                       cmvn_normalize, mel_filterbank, mel_spectrogram)
from .griffin_lim import griffin_lim_invert
from .io import MEL_MAGIC, read_mel, read_wav, write_mel, write_wav
from .resample import resample
from .types import (N_MELS, FrontendConfig, MelSpectrogram, SpecAugmentPolicy,
                    Waveform)

__all__ = [
    "CmvnStats", "FrontendConfig", "MEL_MAGIC", "MelSpectrogram", "N_MELS",
    "SpecAugmentPolicy", "Waveform", "affine_denormalize", "affine_normalize",
    "cmvn_normalize", "griffin_lim_invert", "mel_filterbank",
    "mel_spectrogram", "read_mel", "read_wav", "resample", "spec_augment",
    "write_mel", "write_wav",
]
