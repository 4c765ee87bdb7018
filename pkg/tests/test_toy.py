"""Synthetic corpus: generation, the recognition oracle, helper backend."""

import json
import math
import sys

import numpy as np
import pytest

from s2st import data
from s2st.data.toy import (SRC_SR, TGT_SR, TTS_GAIN, ToyBackend, ToySpec,
                           ToyWorld, default_toy_spec, generate_toy_corpus)
from s2st.audio.io import read_wav
from s2st.errors import ConfigError


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("toy")
    spec = default_toy_spec(n_primary=6, n_secondary=10, seed=11)
    primary, secondary = generate_toy_corpus(spec, root)
    return root, spec, primary, secondary


class TestSpecValidation:
    def test_default_spec_well_formed(self):
        spec = default_toy_spec(4, 4)
        assert set(spec.mapping_primary) == set(spec.src_vocab)
        assert len(set(spec.mapping_primary.values())) == len(spec.src_vocab)

    def test_charsets_must_be_disjoint(self):
        spec = default_toy_spec(4, 4)
        with pytest.raises(ConfigError):
            ToySpec(**{**spec.__dict__, "tgt_vocab": spec.src_vocab})

    def test_mapping_must_be_injective(self):
        spec = default_toy_spec(4, 4)
        bad = dict(spec.mapping_primary)
        keys = list(bad)
        bad[keys[0]] = bad[keys[1]]
        with pytest.raises(ConfigError):
            ToySpec(**{**spec.__dict__, "mapping_primary": bad})

    def test_conflict_fraction_changes_secondary_mapping(self):
        plain = default_toy_spec(4, 4, conflict_fraction=0.0)
        conflicted = default_toy_spec(4, 4, conflict_fraction=0.5)
        assert plain.mapping_secondary == plain.mapping_primary
        diff = [w for w in conflicted.mapping_primary
                if conflicted.mapping_primary[w] != conflicted.mapping_secondary[w]]
        assert len(diff) == 5  # round(0.5 * 10) source words disagree
        # still injective
        vals = list(conflicted.mapping_secondary.values())
        assert len(set(vals)) == len(vals)


class TestGeneration:
    def test_regeneration_bit_identical(self, corpus, tmp_path):
        root, spec, primary, secondary = corpus
        p2, s2 = generate_toy_corpus(spec, tmp_path)
        for a, b in zip(primary.records, p2.records):
            assert a.src_text == b.src_text and a.tgt_text == b.tgt_text
            assert (root / a.src_audio).read_bytes() == \
                   (tmp_path / b.src_audio).read_bytes()

    def test_counts_and_roles(self, corpus):
        _, spec, primary, secondary = corpus
        assert len(primary) == 6 and primary.role == "primary"
        assert len(secondary) == 10 and secondary.role == "secondary"
        for r in primary.records:
            assert r.tgt_text_origin == "real" and r.tgt_audio_origin == "pseudo"

    def test_translation_follows_primary_mapping(self, corpus):
        _, spec, primary, _ = corpus
        for r in primary.records:
            want = " ".join(spec.mapping_primary[w] for w in r.src_text.split())
            assert r.tgt_text == want

    def test_asr_variant_blanks_targets(self, corpus):
        root, _, _, secondary = corpus
        asr = data.read_manifest(root / "secondary_asr.jsonl")
        assert len(asr) == len(secondary)
        for r in asr.records:
            assert r.tgt_text == "" and r.tgt_audio == ""

    def test_wav_lengths_match_phone_counts(self, corpus):
        root, spec, primary, _ = corpus
        world = ToyWorld.from_spec(spec)
        r = primary.records[0]
        wave = read_wav(r.src_audio)
        n_phones = sum(len(world.src_lexicon[w]) for w in r.src_text.split())
        hop = int(SRC_SR * 0.010)
        assert wave.samples.size == n_phones * spec.frames_per_phone * hop


class TestRecognitionOracle:
    def test_source_side_recovery(self, corpus):
        root, spec, primary, secondary = corpus
        world = ToyWorld.from_spec(spec)
        total = hits = 0
        for r in list(primary.records) + list(secondary.records):
            got = world.recognize_wave(read_wav(r.src_audio))
            want = [p for w in r.src_text.split() for p in world.src_lexicon[w]]
            assert len(got) == len(want)
            total += len(want)
            hits += sum(g == w for g, w in zip(got, want))
        assert hits / total >= 0.95

    def test_target_side_recovery(self, corpus):
        root, spec, primary, _ = corpus
        world = ToyWorld.from_spec(spec)
        for r in primary.records:
            got = world.recognize_wave(read_wav(r.tgt_audio))
            want = [p for w in r.tgt_text.split() for p in world.tgt_lexicon[w]]
            assert got == want

    def test_synth_recognize_round_trip(self, corpus):
        _, spec, _, _ = corpus
        world = ToyWorld.from_spec(spec)
        wave = world.synth(["a", "b", "j"], "src", TTS_GAIN)
        assert world.recognize_wave(wave) == ["a", "b", "j"]

    def test_templates_survive_save_load(self, corpus, tmp_path):
        _, spec, _, _ = corpus
        world = ToyWorld.from_spec(spec)
        world.save(tmp_path / "templates.json")
        again = ToyWorld.load(tmp_path / "templates.json")
        wave = world.synth(["c", "c", "d"], "src", 0.8)
        assert again.recognize_wave(wave) == ["c", "c", "d"]


class TestBackend:
    def _backend(self, corpus, out):
        _, spec, _, _ = corpus
        return ToyBackend(ToyWorld.from_spec(spec), out)

    def test_mt_uses_secondary_mapping(self, corpus, tmp_path):
        _, spec, _, _ = corpus
        backend = self._backend(corpus, tmp_path)
        res = backend.handle({"id": "1", "task": "mt", "text": "a b"})
        want = " ".join(spec.mapping_secondary[w] for w in ["a", "b"])
        assert res["ok"] and res["text"] == want

    def test_tts_produces_recognizable_audio(self, corpus, tmp_path):
        _, spec, _, _ = corpus
        backend = self._backend(corpus, tmp_path)
        res = backend.handle({"id": "1", "task": "tts", "text": "A B"})
        assert res["ok"]
        world = ToyWorld.from_spec(spec)
        assert world.recognize_wave(read_wav(res["audio"])) == ["A", "B"]

    def test_tts_content_addressed(self, corpus, tmp_path):
        backend = self._backend(corpus, tmp_path)
        a = backend.handle({"id": "1", "task": "tts", "text": "C D"})
        b = backend.handle({"id": "2", "task": "tts", "text": "C D"})
        assert a["audio"] == b["audio"]

    def test_asr_round_trip(self, corpus, tmp_path):
        _, _, primary, _ = corpus
        backend = self._backend(corpus, tmp_path)
        r = primary.records[0]
        res = backend.handle({"id": "1", "task": "asr", "audio": r.tgt_audio})
        assert res["ok"] and res["text"] == r.tgt_text

    def test_unknown_word_fails_cleanly(self, corpus, tmp_path):
        backend = self._backend(corpus, tmp_path)
        res = backend.handle({"id": "1", "task": "mt", "text": "zzz"})
        assert res["ok"] is False and res["err"]


class TestServerSubprocess:
    def test_full_prepare_flow_over_pipes(self, corpus, tmp_path):
        root, spec, _, secondary = corpus
        asr = data.read_manifest(root / "secondary_asr.jsonl")
        cmd = [sys.executable, "-m", "s2st.data.toy_server",
               "--templates", str(root / "templates.json"),
               "--out-dir", str(tmp_path / "tts")]
        transcript = tmp_path / "transcript.jsonl"
        with data.SubprocessClient(cmd, transcript) as client:
            translated = data.pseudo_translate(asr, client)
            synthesized = data.synthesize_targets(translated, client)
        for got, ref in zip(synthesized.records, secondary.records):
            assert got.tgt_text == ref.tgt_text
            assert not got.failed
            assert read_wav(got.tgt_audio).samples.size == \
                   read_wav(ref.tgt_audio).samples.size

        # rebuilding from the transcript alone gives identical records
        replay = data.ReplayClient(transcript)
        translated2 = data.pseudo_translate(asr, replay)
        synthesized2 = data.synthesize_targets(translated2, replay)
        for a, b in zip(synthesized.records, synthesized2.records):
            assert a.to_json_line() == b.to_json_line()

    def test_malformed_line_answered_not_fatal(self, corpus, tmp_path):
        import subprocess
        root, _, _, _ = corpus
        proc = subprocess.Popen(
            [sys.executable, "-m", "s2st.data.toy_server",
             "--templates", str(root / "templates.json"),
             "--out-dir", str(tmp_path)],
            stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True)
        try:
            proc.stdin.write("this is not json\n")
            proc.stdin.write(json.dumps(
                {"id": "ok1", "task": "mt", "text": "a"}) + "\n")
            proc.stdin.flush()
            first = json.loads(proc.stdout.readline())
            second = json.loads(proc.stdout.readline())
            assert first["ok"] is False
            assert second["ok"] is True and second["id"] == "ok1"
        finally:
            proc.stdin.close()
            proc.wait(timeout=10)


class TestFeatures:
    def test_example_shapes_and_range(self, corpus):
        _, spec, primary, _ = corpus
        fx = data.FeatureExtractor()
        ex = fx.example(primary.records[0])
        assert ex.src_feat.shape[1] == 80 and ex.tgt_feat.shape[1] == 80
        assert np.all(np.isfinite(ex.src_feat))
        assert float(np.abs(ex.src_feat).max()) < 6.0
        n_src_phones = len([p for p in ex.src_phones])
        assert ex.src_feat.shape[0] > 0 and ex.tgt_feat.shape[0] > 0

    def test_cache_returns_same_array(self, corpus):
        _, _, primary, _ = corpus
        fx = data.FeatureExtractor()
        a = fx.example(primary.records[0]).src_feat
        b = fx.example(primary.records[0]).src_feat
        assert a is b

    def test_silence_maps_to_fixed_negative_value(self):
        from s2st.data.features import (FEAT_OFFSET, FEAT_SCALE,
                                        normalized_silence)
        want = (math.log(1e-10) - FEAT_OFFSET) / FEAT_SCALE
        assert abs(normalized_silence() - want) < 1e-12
        assert -3.0 < normalized_silence() < -2.0
