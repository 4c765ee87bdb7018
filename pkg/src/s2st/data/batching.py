"""Token-budget batching over manifest records."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

from ..errors import ContractError


@dataclass
class Batch:
    records: list
    token_count: int


def default_frame_count(record) -> int:
    """Source frame count at the 10 ms hop, read from the audio file."""
    import math

    from ..audio.io import read_wav
    wave = read_wav(record.src_audio)
    hop = int(round(0.010 * wave.sample_rate))
    return int(math.ceil(len(wave.samples) / hop))


def batch_by_tokens(records, max_tokens: int, sort_by_length: bool = False,
                    frames_fn=None) -> list:
    """Greedy packing: each batch's summed source frames stays <= max_tokens.

    A record longer than the whole budget becomes a singleton batch with a
    warning rather than an error. Every record lands in exactly one batch;
    order within the stream is the manifest order unless sort_by_length
    packs longest-first (stable for equal lengths).
    """
    if max_tokens <= 0:
        raise ContractError("max_tokens must be positive")
    frames_fn = frames_fn or default_frame_count
    items = [(r, int(frames_fn(r))) for r in records]
    if sort_by_length:
        items = sorted(enumerate(items), key=lambda p: (-p[1][1], p[0]))
        items = [it for _, it in items]
    batches = []
    cur, cur_tokens = [], 0
    for record, frames in items:
        if frames > max_tokens and not cur:
            warnings.warn(
                f"record {record.id} has {frames} frames, over the "
                f"{max_tokens}-token budget; emitting a singleton batch")
            batches.append(Batch([record], frames))
            continue
        if cur and cur_tokens + frames > max_tokens:
            batches.append(Batch(cur, cur_tokens))
            cur, cur_tokens = [], 0
        if frames > max_tokens:
            warnings.warn(
                f"record {record.id} has {frames} frames, over the "
                f"{max_tokens}-token budget; emitting a singleton batch")
            batches.append(Batch([record], frames))
            continue
        cur.append(record)
        cur_tokens += frames
    if cur:
        batches.append(Batch(cur, cur_tokens))
    return batches
