"""Synthetic bilingual corpus with analytically separable phone acoustics.

Every phone owns a fixed two-sinusoid signature, so an 80 ms phone chunk
occupies a unique pair of mel bands and template correlation can read the
phone sequence straight back off the spectrogram. The source and target
inventories use disjoint character sets (lowercase vs uppercase) so the
code-switch filter has something real to detect, and the two translation
mappings may deliberately disagree to create the domain conflict the
prompt machinery is meant to resolve.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..audio.frontend import mel_spectrogram
from ..audio.io import write_wav
from ..audio.types import FrontendConfig, MelSpectrogram, Waveform
from ..errors import ClientError, ConfigError, ContractError
from ..seeding import derive_rng
from .phonemize import PhoneVocab, phonemize
from .records import CorpusManifest, UtteranceRecord, write_manifest

SRC_SR = 16000
TGT_SR = 24000
TTS_GAIN = 0.9

TEMPLATES_FILENAME = "templates.json"


def _freq_table(vocab, base: float, step: float, spread: float) -> dict:
    return {p: (base + step * i, base + step * i + spread)
            for i, p in enumerate(vocab)}


@dataclass
class ToySpec:
    n_primary: int
    n_secondary: int
    src_vocab: tuple
    tgt_vocab: tuple
    mapping_primary: dict
    mapping_secondary: dict
    utterance_len_range: tuple = (3, 8)
    frames_per_phone: int = 8
    seed: int = 0
    n_heldout: int = 0

    def __post_init__(self):
        self.src_vocab = tuple(self.src_vocab)
        self.tgt_vocab = tuple(self.tgt_vocab)
        if min(self.n_primary, self.n_secondary, self.n_heldout) < 0:
            raise ConfigError("corpus sizes must be non-negative")
        if len(set(self.src_vocab)) != len(self.src_vocab) or not self.src_vocab:
            raise ConfigError("src_vocab must be non-empty and unique")
        if len(set(self.tgt_vocab)) != len(self.tgt_vocab) or not self.tgt_vocab:
            raise ConfigError("tgt_vocab must be non-empty and unique")
        src_chars = set("".join(self.src_vocab))
        tgt_chars = set("".join(self.tgt_vocab))
        if src_chars & tgt_chars:
            raise ConfigError(
                f"source/target charsets must be disjoint, share "
                f"{sorted(src_chars & tgt_chars)}")
        for name, mapping in (("mapping_primary", self.mapping_primary),
                              ("mapping_secondary", self.mapping_secondary)):
            if set(mapping) != set(self.src_vocab):
                raise ConfigError(f"{name} must cover the full source inventory")
            values = list(mapping.values())
            if not set(values) <= set(self.tgt_vocab):
                raise ConfigError(f"{name} maps outside the target inventory")
            if len(set(values)) != len(values):
                raise ConfigError(f"{name} must be injective")
        lo, hi = self.utterance_len_range
        if not 1 <= lo <= hi:
            raise ConfigError(f"bad utterance length range {self.utterance_len_range}")
        if self.frames_per_phone < 2:
            raise ConfigError("frames_per_phone must be at least 2")


def default_toy_spec(n_primary: int = 64, n_secondary: int = 512,
                     seed: int = 0, conflict_fraction: float = 0.0,
                     n_heldout: int = 0,
                     utterance_len_range: tuple = (3, 8)) -> ToySpec:
    """Ten lowercase source phones, ten uppercase target phones.

    The primary mapping is positional (a->A .. j->J). conflict_fraction
    rotates that many source phones' targets one step in the secondary
    mapping, keeping it injective while disagreeing with the primary
    mapping on exactly those phones; 1.0 rotates everything.
    """
    if not 0.0 <= conflict_fraction <= 1.0:
        raise ConfigError("conflict_fraction must lie in [0, 1]")
    src = tuple("abcdefghij")
    tgt = tuple("ABCDEFGHIJ")
    primary = {s: t for s, t in zip(src, tgt)}
    n_conflict = int(round(conflict_fraction * len(src)))
    secondary = dict(primary)
    if n_conflict == 1:
        n_conflict = 2  # a lone rotation cannot stay injective
    if n_conflict:
        rotated = [primary[s] for s in src[:n_conflict]]
        for s, t in zip(src[:n_conflict], rotated[1:] + rotated[:1]):
            secondary[s] = t
    return ToySpec(n_primary=n_primary, n_secondary=n_secondary,
                   src_vocab=src, tgt_vocab=tgt, mapping_primary=primary,
                   mapping_secondary=secondary, seed=seed, n_heldout=n_heldout,
                   utterance_len_range=utterance_len_range)


class ToyWorld:
    """Everything the synthetic languages define: acoustics, lexica, maps."""

    def __init__(self, src_vocab, tgt_vocab, mapping_primary, mapping_secondary,
                 frames_per_phone: int, src_freqs=None, tgt_freqs=None):
        self.src_vocab = tuple(src_vocab)
        self.tgt_vocab = tuple(tgt_vocab)
        self.mapping_primary = dict(mapping_primary)
        self.mapping_secondary = dict(mapping_secondary)
        self.frames_per_phone = int(frames_per_phone)
        self.src_freqs = dict(src_freqs) if src_freqs else _freq_table(
            self.src_vocab, 400.0, 300.0, 150.0)
        self.tgt_freqs = dict(tgt_freqs) if tgt_freqs else _freq_table(
            self.tgt_vocab, 450.0, 330.0, 165.0)
        self.src_phone_vocab = PhoneVocab.from_phones(self.src_vocab)
        self.tgt_phone_vocab = PhoneVocab.from_phones(self.tgt_vocab)
        self.src_lexicon = {p: [p] for p in self.src_vocab}
        self.tgt_lexicon = {p: [p] for p in self.tgt_vocab}
        self.src_frontend = FrontendConfig.for_rate(SRC_SR)
        self.tgt_frontend = FrontendConfig.for_rate(TGT_SR)
        self._template_banks = {}

    @classmethod
    def from_spec(cls, spec: ToySpec) -> "ToyWorld":
        return cls(spec.src_vocab, spec.tgt_vocab, spec.mapping_primary,
                   spec.mapping_secondary, spec.frames_per_phone)

    # -- persistence -------------------------------------------------------

    def save(self, path) -> None:
        doc = {
            "src_sr": SRC_SR, "tgt_sr": TGT_SR, "tts_gain": TTS_GAIN,
            "frames_per_phone": self.frames_per_phone,
            "src_vocab": list(self.src_vocab), "tgt_vocab": list(self.tgt_vocab),
            "mapping_primary": self.mapping_primary,
            "mapping_secondary": self.mapping_secondary,
            "src_freqs": {k: list(v) for k, v in self.src_freqs.items()},
            "tgt_freqs": {k: list(v) for k, v in self.tgt_freqs.items()},
        }
        Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True),
                              encoding="utf-8")

    @classmethod
    def load(cls, path) -> "ToyWorld":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(doc["src_vocab"], doc["tgt_vocab"], doc["mapping_primary"],
                   doc["mapping_secondary"], doc["frames_per_phone"],
                   {k: tuple(v) for k, v in doc["src_freqs"].items()},
                   {k: tuple(v) for k, v in doc["tgt_freqs"].items()})

    # -- synthesis ---------------------------------------------------------

    def _chunk(self, freqs, sr: int, hop: int) -> np.ndarray:
        n = self.frames_per_phone * hop
        t = np.arange(n) / sr
        f1, f2 = freqs
        x = 0.28 * np.sin(2 * np.pi * f1 * t) + 0.17 * np.sin(2 * np.pi * f2 * t)
        ramp = max(2, int(0.004 * sr))
        env = 0.5 - 0.5 * np.cos(np.pi * np.arange(ramp) / ramp)
        x[:ramp] *= env
        x[-ramp:] *= env[::-1]
        return x

    def synth(self, phones, side: str, gain: float) -> Waveform:
        if side == "src":
            sr, freqs, cfg = SRC_SR, self.src_freqs, self.src_frontend
        elif side == "tgt":
            sr, freqs, cfg = TGT_SR, self.tgt_freqs, self.tgt_frontend
        else:
            raise ContractError(f"side must be src/tgt, got {side!r}")
        unknown = [p for p in phones if p not in freqs]
        if unknown:
            raise ContractError(f"no acoustic template for phones {unknown}")
        if not phones:
            return Waveform(np.zeros(0, dtype=np.float32), sr)
        wave = np.concatenate([self._chunk(freqs[p], sr, cfg.hop_length)
                               for p in phones])
        return Waveform((gain * wave).astype(np.float32), sr)

    # -- recognition -------------------------------------------------------

    def _bank(self, side: str):
        if side not in self._template_banks:
            if side == "src":
                vocab, cfg = self.src_vocab, self.src_frontend
                sr = SRC_SR
            else:
                vocab, cfg = self.tgt_vocab, self.tgt_frontend
                sr = TGT_SR
            rows = []
            for p in vocab:
                wave = self.synth([p], side, TTS_GAIN)
                mel = mel_spectrogram(wave, cfg)
                rows.append(mel.frames.mean(axis=0))
            self._template_banks[side] = (vocab, np.stack(rows))
        return self._template_banks[side]

    def recognize_wave(self, wave: Waveform) -> list:
        """Segment into phone-sized blocks and match against templates."""
        if wave.sample_rate == SRC_SR:
            side, cfg = "src", self.src_frontend
        elif wave.sample_rate == TGT_SR:
            side, cfg = "tgt", self.tgt_frontend
        else:
            raise ClientError(
                f"no template bank for sample rate {wave.sample_rate}")
        mel = mel_spectrogram(wave, cfg)
        return self.recognize_mel(mel, side)

    def recognize_mel(self, mel: MelSpectrogram, side: str) -> list:
        vocab, bank = self._bank(side)
        t = mel.n_frames
        if t == 0:
            return []
        n_blocks = max(1, int(round(t / self.frames_per_phone)))
        edges = np.linspace(0, t, n_blocks + 1).astype(int)
        bank_c = bank - bank.mean(axis=1, keepdims=True)
        bank_n = bank_c / np.maximum(np.linalg.norm(bank_c, axis=1, keepdims=True),
                                     1e-12)
        phones = []
        for i in range(n_blocks):
            block = mel.frames[edges[i]:max(edges[i + 1], edges[i] + 1)].mean(axis=0)
            block = block - block.mean()
            block = block / max(np.linalg.norm(block), 1e-12)
            phones.append(vocab[int(np.argmax(bank_n @ block))])
        return phones

    # -- text-level helpers --------------------------------------------------

    def translate_words(self, text: str, mapping: dict) -> str:
        words = text.split()
        unknown = [w for w in words if w not in mapping]
        if unknown:
            raise ClientError(f"no translation for words {sorted(set(unknown))}")
        return " ".join(mapping[w] for w in words)


def _make_record(world: ToyWorld, rid: str, phones, category: str,
                 mapping: dict, audio_dir: Path, rng) -> UtteranceRecord:
    src_text = " ".join(phones)
    tgt_text = world.translate_words(src_text, mapping)
    tgt_phone_syms = tgt_text.split()

    gain = float(rng.uniform(0.75, 0.95))
    src_wave = world.synth(phones, "src", gain)
    tgt_wave = world.synth(tgt_phone_syms, "tgt", TTS_GAIN)
    src_path = audio_dir / "src" / f"{rid}.wav"
    tgt_path = audio_dir / "tgt" / f"{rid}.wav"
    src_path.parent.mkdir(parents=True, exist_ok=True)
    tgt_path.parent.mkdir(parents=True, exist_ok=True)
    write_wav(src_path, src_wave)
    write_wav(tgt_path, tgt_wave)

    return UtteranceRecord(
        id=rid, src_audio=str(src_path), src_sr=SRC_SR, src_text=src_text,
        category=category,
        src_phones=phonemize(src_text, world.src_lexicon, world.src_phone_vocab),
        tgt_text=tgt_text,
        tgt_text_origin="real" if category == "primary" else "pseudo",
        tgt_phones=phonemize(tgt_text, world.tgt_lexicon, world.tgt_phone_vocab),
        tgt_audio=str(tgt_path), tgt_audio_origin="pseudo")


def generate_toy_corpus(spec: ToySpec, out_dir):
    """Write audio, manifests, and the acoustic template card.

    Produces primary.jsonl / secondary.jsonl (complete records), plus
    secondary_asr.jsonl (the same secondary utterances with target fields
    blanked, as they would arrive from a transcribed-speech-only corpus)
    and heldout.jsonl when the spec asks for held-out primary-domain data.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    world = ToyWorld.from_spec(spec)
    world.save(out_dir / TEMPLATES_FILENAME)
    audio_dir = out_dir / "audio"
    lo, hi = spec.utterance_len_range

    def build(count, prefix, category, mapping, stream):
        rows = []
        for i in range(count):
            rng = derive_rng("toy", spec.seed, stream, i)
            length = int(rng.integers(lo, hi + 1))
            phones = [spec.src_vocab[int(k)]
                      for k in rng.integers(0, len(spec.src_vocab), size=length)]
            rows.append(_make_record(world, f"{prefix}{i:04d}", phones, category,
                                     mapping, audio_dir, rng))
        return rows

    primary = CorpusManifest(
        build(spec.n_primary, "p", "primary", spec.mapping_primary, "primary"),
        "primary")
    secondary = CorpusManifest(
        build(spec.n_secondary, "s", "secondary", spec.mapping_secondary,
              "secondary"), "secondary")
    write_manifest(primary, out_dir / "primary.jsonl")
    write_manifest(secondary, out_dir / "secondary.jsonl")

    asr_only = CorpusManifest(
        [r.copy_with(tgt_text="", tgt_text_origin="", tgt_phones=[],
                     tgt_audio="", tgt_audio_origin="")
         for r in secondary.records], "secondary")
    write_manifest(asr_only, out_dir / "secondary_asr.jsonl")

    if spec.n_heldout:
        heldout = CorpusManifest(
            build(spec.n_heldout, "h", "primary", spec.mapping_primary,
                  "heldout"), "primary")
        write_manifest(heldout, out_dir / "heldout.jsonl")

    return primary, secondary


class ToyBackend:
    """Serves the wire protocol for all three helper roles.

    MT applies the secondary mapping (it stands in for the general-domain
    translation system that pseudo-labels dataset B). TTS synthesizes
    target-side audio into its output directory, named by a content hash
    so identical texts land on identical files. ASR template-matches
    either language by sample rate.
    """

    def __init__(self, world: ToyWorld, out_dir, mt_mapping: str = "secondary"):
        if mt_mapping not in ("primary", "secondary"):
            raise ConfigError(f"mt_mapping must be primary/secondary")
        self.world = world
        self.out_dir = Path(out_dir)
        self.mapping = (world.mapping_secondary if mt_mapping == "secondary"
                        else world.mapping_primary)

    def handle(self, req: dict) -> dict:
        import zlib

        from ..audio.io import read_wav
        rid = req.get("id", "")
        task = req.get("task")
        try:
            if task == "mt":
                text = self.world.translate_words(req["text"], self.mapping)
                return {"id": rid, "ok": True, "text": text}
            if task == "tts":
                words = req["text"].split()
                if not words:
                    return {"id": rid, "ok": False, "err": "empty text"}
                wave = self.world.synth(words, "tgt", TTS_GAIN)
                tag = zlib.crc32(req["text"].encode("utf-8"))
                path = self.out_dir / f"tts_{tag:08x}.wav"
                path.parent.mkdir(parents=True, exist_ok=True)
                write_wav(path, wave)
                return {"id": rid, "ok": True, "audio": str(path)}
            if task == "asr":
                wave = read_wav(req["audio"])
                phones = self.world.recognize_wave(wave)
                return {"id": rid, "ok": True, "text": " ".join(phones)}
            return {"id": rid, "ok": False, "err": f"unknown task {task!r}"}
        except Exception as e:
            return {"id": rid, "ok": False, "err": f"{type(e).__name__}: {e}"}
