"""Deterministic RNG derivation from (name, seed, step) style keys.

Every random draw in the system comes from a generator created here, so
reproducing a run needs only the run's integer seed, never saved RNG
state. Stream names are folded in via CRC-32, which is stable across
platforms and processes (unlike the builtin hash).
"""

from __future__ import annotations

import zlib

import numpy as np


def _as_int(part) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part) & 0xFFFFFFFF
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    raise TypeError(f"seed parts must be ints or strings, got {type(part)}")


def derive_rng(*parts) -> np.random.Generator:
    return np.random.default_rng([_as_int(p) for p in parts])


def derive_seed(*parts) -> int:
    """A single 63-bit integer usable as a seed for nested derivations."""
    return int(derive_rng(*parts).integers(0, 2 ** 63 - 1))
