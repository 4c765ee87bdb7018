"""WAV and binary spectrogram files.

Spectrogram layout: magic "S2STMEL1", then T, n_mels, sample_rate and
hop_length as little-endian int32, then T*n_mels row-major float32 values.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from ..errors import ParseError
from .types import N_MELS, MelSpectrogram, Waveform

MEL_MAGIC = b"S2STMEL1"
_HEADER = struct.Struct("<4i")


def read_wav(path) -> Waveform:
    try:
        rate, data = wavfile.read(path)
    except ValueError as e:
        raise ParseError(f"{path}: not a readable WAV file ({e})") from e
    if data.ndim != 1:
        raise ParseError(f"{path}: expected mono audio, got {data.ndim} channels")
    if data.dtype == np.int16:
        samples = data.astype(np.float32) / 32768.0
    elif data.dtype == np.float32:
        samples = np.clip(data, -1.0, 1.0)
    else:
        raise ParseError(f"{path}: unsupported sample format {data.dtype}, "
                         "need 16-bit PCM or 32-bit float")
    return Waveform(samples, int(rate))


def write_wav(path, wave: Waveform) -> None:
    pcm = np.clip(np.round(wave.samples.astype(np.float64) * 32767.0),
                  -32768, 32767).astype(np.int16)
    wavfile.write(path, wave.sample_rate, pcm)


def write_mel(path, mel: MelSpectrogram) -> None:
    frames = np.ascontiguousarray(mel.frames, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(MEL_MAGIC)
        fh.write(_HEADER.pack(mel.n_frames, frames.shape[1],
                              mel.sample_rate, mel.hop_length))
        fh.write(frames.tobytes())


def read_mel(path, origin: str = "source") -> MelSpectrogram:
    raw = Path(path).read_bytes()
    if len(raw) < len(MEL_MAGIC) + _HEADER.size:
        raise ParseError(f"{path}: truncated spectrogram header")
    if raw[:len(MEL_MAGIC)] != MEL_MAGIC:
        raise ParseError(f"{path}: bad magic {raw[:8]!r}")
    t, n_mels, rate, hop = _HEADER.unpack_from(raw, len(MEL_MAGIC))
    if n_mels != N_MELS:
        raise ParseError(f"{path}: expected {N_MELS} channels, header says {n_mels}")
    if t < 0 or rate <= 0 or hop <= 0:
        raise ParseError(f"{path}: implausible header ({t}, {n_mels}, {rate}, {hop})")
    body = raw[len(MEL_MAGIC) + _HEADER.size:]
    want = 4 * t * n_mels
    if len(body) != want:
        raise ParseError(f"{path}: payload is {len(body)} bytes, header implies {want}")
    frames = np.frombuffer(body, dtype="<f4").reshape(t, n_mels).astype(np.float32)
    return MelSpectrogram(frames, rate, hop, origin)
