"""Record filters: code switching, failed synthesis, duration, empty text."""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import ConfigError
from .records import CorpusManifest


def _default_duration(record) -> float:
    from ..audio.io import read_wav
    return read_wav(record.src_audio).duration


@dataclass(frozen=True)
class CodeSwitchRule:
    """Drop translations that mix characters from both language charsets."""

    src_charset: frozenset
    tgt_charset: frozenset
    name = "code_switch"

    def __post_init__(self):
        src = frozenset(self.src_charset)
        tgt = frozenset(self.tgt_charset)
        if src & tgt:
            raise ConfigError(f"charsets overlap on {sorted(src & tgt)}")
        object.__setattr__(self, "src_charset", src)
        object.__setattr__(self, "tgt_charset", tgt)

    def violates(self, record) -> bool:
        chars = set(record.tgt_text) - {" "}
        return bool(chars & self.src_charset) and bool(chars & self.tgt_charset)


@dataclass(frozen=True)
class SynthesisFailedRule:
    name = "synthesis_failed"

    def violates(self, record) -> bool:
        return bool(record.failed)


@dataclass(frozen=True)
class MaxDurationRule:
    """Drop source utterances longer than the limit (seconds).

    duration_fn exists so bulk tests can supply durations without audio
    files on disk; the default reads the source WAV.
    """

    seconds: float
    duration_fn: object = None
    name = "max_duration"

    def __post_init__(self):
        if self.seconds <= 0:
            raise ConfigError("duration limit must be positive")

    def violates(self, record) -> bool:
        fn = self.duration_fn or _default_duration
        return fn(record) > self.seconds


@dataclass(frozen=True)
class EmptyTextRule:
    name = "empty_text"

    def violates(self, record) -> bool:
        return not record.src_text.strip() or (
            bool(record.tgt_text_origin) and not record.tgt_text.strip())


@dataclass
class DroppedRecord:
    record: object
    reason: str


def filter_corpus(manifest: CorpusManifest, rules):
    """Partition into (kept manifest, dropped list with first-violation reasons)."""
    kept, dropped = [], []
    for r in manifest.records:
        reason = next((rule.name for rule in rules if rule.violates(r)), None)
        if reason is None:
            kept.append(r)
        else:
            dropped.append(DroppedRecord(r, reason))
    return CorpusManifest(kept, manifest.role), dropped
