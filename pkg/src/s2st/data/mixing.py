"""Upsampled mixing of the primary corpus into the secondary one."""

from __future__ import annotations

import math

from ..errors import ContractError
from ..seeding import derive_rng
from .records import CorpusManifest


def upsample_factor(n_primary: int, n_secondary: int) -> int:
    """d = max(1, round(|B|/|A|)), rounding half away from zero."""
    if n_primary <= 0 or n_secondary <= 0:
        raise ContractError("both corpora must be non-empty")
    return max(1, int(math.floor(n_secondary / n_primary + 0.5)))


def mix_upsample(primary: CorpusManifest, secondary: CorpusManifest,
                 seed: int = 0) -> CorpusManifest:
    """Duplicate primary records d times, append secondary, shuffle by seed.

    Copies beyond the first get ~k id suffixes so ids stay unique; category
    tags ride along unchanged on every copy.
    """
    if not primary.records or not secondary.records:
        raise ContractError("mixing needs non-empty primary and secondary corpora")
    d = upsample_factor(len(primary), len(secondary))
    mixed = []
    for k in range(d):
        for r in primary.records:
            rid = r.id if k == 0 else f"{r.id}~{k + 1}"
            mixed.append(r.copy_with(id=rid))
    mixed.extend(r.copy_with() for r in secondary.records)
    order = derive_rng("mix", seed).permutation(len(mixed))
    return CorpusManifest([mixed[i] for i in order], "mixed")
