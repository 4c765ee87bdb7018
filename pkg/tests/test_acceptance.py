"""Acceptance gate: one test (one pass/fail line under -v) per guarantee.

The file is self-contained: oracles are re-stated here rather than
imported from the unit suites, so a green run of this module alone
certifies the build. Training-heavy fixtures are shared at module scope
and their wall time is asserted against the stated budgets.
"""

import itertools
import json
import math
import time
import warnings
from pathlib import Path

import numpy as np
import pytest
from scipy.stats import spearmanr

from s2st.checks import gradient_suite
from s2st.cli import run_command
from s2st.data import (CallableClient, CorpusManifest, EmptyTextRule,
                       FeatureExtractor, MaxDurationRule, ReplayClient,
                       SynthesisFailedRule, ToyWorld, UtteranceRecord,
                       batch_by_tokens, default_toy_spec, filter_corpus,
                       generate_toy_corpus, mix_upsample, phonemize,
                       pseudo_translate, read_manifest, synthesize_targets,
                       upsample_factor, write_manifest)
from s2st.data.phonemize import EOS, WB
from s2st.data.toy import ToySpec
from s2st.eval import (DecodeConfig, bleu, decode_phonemes, evaluate,
                       length_penalty, levenshtein, sequence_logprob)
from s2st.model import S2STModel, subsampled_length, toy_config
from s2st import nd
from s2st.nd import ops
from s2st.nd.tensor import backward
from s2st.train import StageConfig, model_from_checkpoint, run_stage

# Training knobs shared by the regime fixtures. Step counts are the
# smallest that keep the orderings stable across seeds with margin.
SEEDS = (0, 1, 2, 3, 4)
BASE_LR = 0.002
WARMUP = 100
BATCH_TOKENS = 1200
PRETRAIN_STEPS = 400
TUNE_STEPS = 150          # consistent-mapping chain legs
CONFLICT_TUNE_STEPS = 250  # conflicting-mapping legs need the extra steps

TINY = dict(enc_layers=2, enc_dim=16, enc_heads=2, ffn_dim=32,
            subsample_channels=4, dec_layers=2, dec_dim=16, dec_heads=2,
            prenet_hidden=12, prenet_bottleneck=8, postnet_layers=2,
            postnet_channels=8, postnet_kernel=3, aux_dim=16, aux_heads=2,
            aux_ffn_dim=32, tap_src=1, tap_tgt=2)


def _stage(kind, steps, seed, batch_tokens=BATCH_TOKENS, **kw):
    return StageConfig(kind=kind, base_lr=BASE_LR, warmup_steps=WARMUP,
                       max_steps=steps, batch_tokens=batch_tokens, seed=seed,
                       **kw)


def _wide_spec(seed, n_conflict=0):
    """64/512/64 corpus over a 26-phone inventory.

    The wide inventory keeps 64 primary utterances from saturating the
    task (phone bigrams stay under-covered), which is what gives the
    extra secondary data something to contribute.
    """
    import string
    src = tuple(string.ascii_lowercase)
    tgt = tuple(string.ascii_uppercase)
    primary = dict(zip(src, tgt))
    secondary = dict(primary)
    if n_conflict:
        rot = [primary[s] for s in src[:n_conflict]]
        for s, t in zip(src[:n_conflict], rot[1:] + rot[:1]):
            secondary[s] = t
    return ToySpec(n_primary=64, n_secondary=512, src_vocab=src,
                   tgt_vocab=tgt, mapping_primary=primary,
                   mapping_secondary=secondary, seed=seed, n_heldout=64)


def _world_model(spec):
    world = ToyWorld.from_spec(spec)
    cfg = toy_config(len(world.src_phone_vocab), len(world.tgt_phone_vocab),
                     prompt_enabled=True)
    return world, cfg, FeatureExtractor(cfg.feat_offset, cfg.feat_scale)


def _heldout_spec_l1(model, heldout, extractor, prompt=None):
    """Teacher-forced spectrogram L1 per frame entry over a manifest.

    Dropout is reseeded identically per utterance so numbers from
    different checkpoints of the same shape are comparable.
    """
    r = model.cfg.reduction_factor
    model.eval()
    total, entries = 0.0, 0
    for rec in heldout.records:
        ex = extractor.example(rec)
        tgt = ex.tgt_feat
        pad = (-tgt.shape[0]) % r
        tgt_in = np.pad(tgt, ((0, pad), (0, 0))) if pad else tgt
        model.reseed_dropout(("l1", rec.id))
        enc = model.encode(ex.src_feat[None],
                           np.ones((1, ex.src_feat.shape[0]), bool),
                           prompt=prompt)
        out = model.decode_spectrogram_teacher_forced(enc, tgt_in[None])
        diff = np.abs(out.mel_after.data[0, :tgt.shape[0]] - tgt)
        total += float(diff.sum())
        entries += diff.size
    return total / entries


def _strip_wb(ids):
    return [i for i in ids if i != WB]


def _phone_accuracy(rows, ref_by_id):
    """1 - pooled PER over word-boundary-stripped target phones."""
    edits = sum(levenshtein(_strip_wb(ref_by_id[r.id]), _strip_wb(r.hyp_tgt))
                for r in rows)
    total = sum(len(_strip_wb(ref_by_id[r.id])) for r in rows)
    return max(0.0, 1.0 - edits / total)


def _ma_ratio(log_path):
    """(mean of last 200 step losses) / (mean of first 200)."""
    totals = [json.loads(line)["total"]
              for line in Path(log_path).read_text().splitlines()]
    return float(np.mean(totals[-200:])) / float(np.mean(totals[:200]))


# --------------------------------------------------------------- fixtures


@pytest.fixture(scope="module")
def regime_runs(tmp_path_factory):
    """Per seed: baseline / pretrain+finetune / mixed / prompt legs on a
    consistent-mapping corpus, with held-out Tp-BLEU and spectrogram L1
    for every tuned checkpoint."""
    t0 = time.perf_counter()
    per_seed = []
    for s in SEEDS:
        root = tmp_path_factory.mktemp(f"regime{s}")
        spec = _wide_spec(300 + s)
        primary, secondary = generate_toy_corpus(spec, root)
        heldout = read_manifest(root / "heldout.jsonl")
        world, cfg, ex = _world_model(spec)

        base = S2STModel(cfg, seed=s)
        run_stage(base, _stage("finetune", TUNE_STEPS, s), primary=primary,
                  extractor=ex)
        pre = S2STModel(cfg, seed=s)
        ck = run_stage(pre, _stage("pretrain", PRETRAIN_STEPS, s),
                       secondary=secondary, extractor=ex)
        m1 = model_from_checkpoint(ck)
        run_stage(m1, _stage("finetune", TUNE_STEPS, s), primary=primary,
                  extractor=ex)
        m2 = model_from_checkpoint(ck)
        run_stage(m2, _stage("mixed", TUNE_STEPS, s), primary=primary,
                  secondary=secondary, extractor=ex)
        m3 = model_from_checkpoint(ck)
        run_stage(m3, _stage("prompt", TUNE_STEPS, s), primary=primary,
                  secondary=secondary, extractor=ex)

        dc = DecodeConfig(max_len=20)
        tp, l1 = {}, {}
        for name, model, ev_prompt, l1_prompt in (
                ("baseline", base, None, None),
                ("pre_ft", m1, None, None),
                ("mixed", m2, None, None),
                ("prompt", m3, "record", "primary")):
            tp[name] = evaluate(model, heldout, ex, dc,
                                prompt=ev_prompt).tp_bleu
            l1[name] = _heldout_spec_l1(model, heldout, ex, prompt=l1_prompt)
        per_seed.append(dict(tp=tp, l1=l1))
    return dict(seeds=per_seed, elapsed=time.perf_counter() - t0)


@pytest.fixture(scope="module")
def conflict_runs(tmp_path_factory):
    """Per seed: mixed and prompt legs on a fully conflicting corpus, with
    unprompted Tp-BLEU and per-category phone accuracies."""
    t0 = time.perf_counter()
    per_seed = []
    for s in SEEDS:
        root = tmp_path_factory.mktemp(f"conflict{s}")
        spec = default_toy_spec(64, 512, seed=500 + s, conflict_fraction=1.0,
                                n_heldout=64)
        primary, secondary = generate_toy_corpus(spec, root)
        heldout = read_manifest(root / "heldout.jsonl")
        world, cfg, ex = _world_model(spec)

        refs = {}
        for mapping, key in ((world.mapping_primary, "primary"),
                             (world.mapping_secondary, "secondary")):
            refs[key] = {
                r.id: phonemize(world.translate_words(r.src_text, mapping),
                                world.tgt_lexicon, world.tgt_phone_vocab)
                for r in heldout.records}

        pre = S2STModel(cfg, seed=s)
        ck = run_stage(pre, _stage("pretrain", PRETRAIN_STEPS, s),
                       secondary=secondary, extractor=ex)
        m2 = model_from_checkpoint(ck)
        run_stage(m2, _stage("mixed", CONFLICT_TUNE_STEPS, s),
                  primary=primary, secondary=secondary, extractor=ex)
        m3 = model_from_checkpoint(ck)
        run_stage(m3, _stage("prompt", CONFLICT_TUNE_STEPS, s),
                  primary=primary, secondary=secondary, extractor=ex)

        dc = DecodeConfig(max_len=20)
        rep_mixed = evaluate(m2, heldout, ex, dc)
        rep_routed = evaluate(m3, heldout, ex, dc, prompt="record")
        rep_p = evaluate(m3, heldout, ex, dc, prompt="primary")
        rep_s = evaluate(m3, heldout, ex, dc, prompt="secondary")
        per_seed.append(dict(
            tp_mixed=rep_mixed.tp_bleu,
            tp_prompt=rep_routed.tp_bleu,
            prompt_acc_primary=_phone_accuracy(rep_p.rows, refs["primary"]),
            prompt_acc_secondary=_phone_accuracy(rep_s.rows,
                                                 refs["secondary"]),
            mixed_acc_primary=_phone_accuracy(rep_mixed.rows,
                                              refs["primary"]),
            mixed_acc_secondary=_phone_accuracy(rep_mixed.rows,
                                                refs["secondary"])))
    return dict(seeds=per_seed, elapsed=time.perf_counter() - t0)


# ------------------------------------------------------------- criterion 1


def test_01_gradient_suite_within_tolerance():
    t0 = time.perf_counter()
    results = gradient_suite(primitive_tol=1e-4, model_tol=1e-3)
    elapsed = time.perf_counter() - t0
    failures = [f"{name}: {rep.summary()}" for name, rep in results
                if not rep.passed]
    assert not failures, "gradient failures: " + "; ".join(failures)
    for name, rep in results:
        want_tol = 1e-3 if name == "full_model_loss" else 1e-4
        assert rep.tol == want_tol, f"{name} ran at tol {rep.tol}"
        assert rep.max_abs_err < want_tol
    assert any(name == "full_model_loss" for name, _ in results)
    assert elapsed < 120, f"gradient suite took {elapsed:.1f}s"


# ------------------------------------------------------------- criterion 2


def test_02_shape_causality_tap_and_attention_contracts():
    # quarter-size law for conv subsampling, including the awkward lengths
    for t, want in ((100, 25), (1, 1), (4, 1), (5, 2), (7, 2), (8, 2),
                    (9, 3), (16, 4), (17, 5)):
        assert subsampled_length(t) == want, f"subsampled_length({t})"

    model = S2STModel(toy_config(10, 12, prompt_enabled=True, **TINY), seed=3)
    model.eval()
    rng = np.random.default_rng(7)
    mel = rng.normal(size=(2, 23, 80)).astype(np.float32)
    mask = np.ones((2, 23), dtype=bool)
    mask[1, 18:] = False
    enc = model.encode(mel, mask)
    assert enc.states[0].shape[1] == subsampled_length(23)
    assert int(enc.mask[1].sum()) == subsampled_length(18)

    # decoder-step causality: perturbing target frames of groups >= k must
    # leave every step < k bit-identical
    tgt = rng.normal(scale=0.5, size=(2, 16, 80)).astype(np.float32)
    k = 2
    noisy = tgt.copy()
    noisy[:, k * 4:, :] += 1.0
    model.reseed_dropout(("acc-caus", 1))
    a = model.decode_spectrogram_teacher_forced(model.encode(mel, mask), tgt)
    model.reseed_dropout(("acc-caus", 1))
    b = model.decode_spectrogram_teacher_forced(model.encode(mel, mask),
                                                noisy)
    assert np.array_equal(a.mel_before.data[:, :k * 4],
                          b.mel_before.data[:, :k * 4])
    assert np.array_equal(a.mel_after.data[:, :k * 4],
                          b.mel_after.data[:, :k * 4])
    assert np.array_equal(a.stop_logits.data[:, :k], b.stop_logits.data[:, :k])
    assert not np.array_equal(a.mel_before.data, b.mel_before.data)

    # tap isolation: source-recognition gradients must stop at the tap layer
    ids_in = np.array([[1, 4, 5, 6, 2, 0], [1, 7, 8, 2, 0, 0]])
    idm = ids_in != 0
    logits = model.decode_auxiliary_teacher_forced(model.encode(mel, mask),
                                                   "source", ids_in, idm)
    grads = backward(ops.sum_(logits))
    for name, p in model.named_parameters():
        above_tap = (name.startswith("encoder.layers.1")
                     or name.startswith("encoder.final_norm")
                     or name.startswith("spec_decoder")
                     or name.startswith("aux_tgt"))
        if above_tap:
            assert grads.get(p) is None, f"{name} leaked into the source tap"
    touched = [n for n, p in model.named_parameters()
               if n.startswith("encoder.layers.0") and grads.get(p) is not None]
    assert touched

    # attention rows: under a mask, weights are a distribution over the
    # unmasked keys, and the module output matches the per-head definition
    box = nd.RngBox()
    mha = nd.MultiHeadAttention(8, 2, np.random.default_rng(3), box)
    q = rng.standard_normal((2, 5, 8)).astype(np.float32)
    kv = rng.standard_normal((2, 7, 8)).astype(np.float32)
    key_mask = np.ones((2, 5, 7), dtype=bool)
    key_mask[0, :, 5:] = False
    key_mask[1, 2:, 6] = False
    out = mha(nd.tensor(q), nd.tensor(kv), nd.tensor(kv), mask=key_mask)

    qp = q @ mha.wq.weight.data + mha.wq.bias.data
    kp = kv @ mha.wk.weight.data + mha.wk.bias.data
    vp = kv @ mha.wv.weight.data + mha.wv.bias.data
    h, dh = mha.n_heads, mha.d_head
    ref = np.zeros((2, 5, 8))
    for bi in range(2):
        for head in range(h):
            sl = slice(head * dh, (head + 1) * dh)
            s = qp[bi, :, sl] @ kp[bi, :, sl].T / np.sqrt(dh)
            s = np.where(key_mask[bi], s, -1e9)
            e = np.exp(s - s.max(-1, keepdims=True))
            attn = e / e.sum(-1, keepdims=True)
            np.testing.assert_allclose(attn.sum(-1), 1.0, atol=1e-6)
            assert attn[~key_mask[bi]].max() < 1e-8
            ref[bi, :, sl] = attn @ vp[bi, :, sl]
    ref = ref @ mha.wo.weight.data + mha.wo.bias.data
    np.testing.assert_allclose(out.data, ref, rtol=1e-4, atol=1e-5)


# ------------------------------------------------------------- criterion 3


def test_03_overfits_small_corpus_in_budget(tmp_path):
    t0 = time.perf_counter()
    spec = default_toy_spec(32, 1, seed=20)
    primary, _ = generate_toy_corpus(spec, tmp_path)
    world, cfg, ex = _world_model(spec)
    model = S2STModel(cfg, seed=20)
    log = tmp_path / "train_log.jsonl"
    run_stage(model, _stage("finetune", 2000, 20, batch_tokens=700),
              primary=primary, extractor=ex, log_path=log)

    totals = [json.loads(line)["total"]
              for line in log.read_text().splitlines()]
    assert len(totals) == 2000
    ratio = float(np.mean(totals[-200:])) / float(np.mean(totals[:200]))
    report = evaluate(model, primary, ex, DecodeConfig(max_len=20))
    elapsed = time.perf_counter() - t0
    assert ratio < 0.2, f"loss ratio {ratio:.3f}"
    assert report.s_per < 0.10, f"train-set S-PER {report.s_per:.3f}"
    assert elapsed < 600, f"overfit run took {elapsed:.1f}s"


# ------------------------------------------------------------- criterion 4


def test_04_regime_ordering_on_heldout(regime_runs, conflict_runs):
    ok = 0
    for chain, conf in zip(regime_runs["seeds"], conflict_runs["seeds"]):
        tp = chain["tp"]
        chain_holds = (tp["baseline"] <= tp["pre_ft"] + 1e-9
                       and tp["pre_ft"] <= tp["mixed"] + 1e-9)
        prompt_holds = conf["tp_prompt"] >= conf["tp_mixed"] - 1e-9
        ok += chain_holds and prompt_holds
    budget = regime_runs["elapsed"] + conflict_runs["elapsed"]
    assert ok >= 4, (f"ordering held in {ok}/5 seeds: "
                     f"{[s['tp'] for s in regime_runs['seeds']]} / "
                     f"{[(s['tp_mixed'], s['tp_prompt']) for s in conflict_runs['seeds']]}")
    assert budget < 2700, f"regime runs took {budget:.0f}s"


# ------------------------------------------------------------- criterion 5


def test_05_prompt_selects_the_output_mapping(conflict_runs):
    ok = 0
    for seed_stats in conflict_runs["seeds"]:
        prompted = (seed_stats["prompt_acc_primary"] >= 0.90
                    and seed_stats["prompt_acc_secondary"] >= 0.90)
        unprompted_capped = not (seed_stats["mixed_acc_primary"] > 0.60
                                 and seed_stats["mixed_acc_secondary"] > 0.60)
        ok += prompted and unprompted_capped
    assert ok >= 4, f"prompt control held in {ok}/5 seeds: {conflict_runs['seeds']}"


# ------------------------------------------------------------- criterion 6


def _edit_script_search(ref, hyp):
    """Branch-and-bound over raw edit scripts; no DP recurrence."""
    best = [max(len(ref), len(hyp))]

    def go(i, j, cost):
        if cost > best[0]:
            return
        if i == len(ref) and j == len(hyp):
            best[0] = min(best[0], cost)
            return
        if i < len(ref) and j < len(hyp) and ref[i] == hyp[j]:
            go(i + 1, j + 1, cost)
        if i < len(ref) and j < len(hyp):
            go(i + 1, j + 1, cost + 1)
        if i < len(ref):
            go(i + 1, j, cost + 1)
        if j < len(hyp):
            go(i, j + 1, cost + 1)

    go(0, 0, 0)
    return best[0]


def _enumerate_best(model, enc, which, cfg):
    """Score every candidate up to max_len with the model itself."""
    vocab = (model.cfg.tgt_phone_vocab if which == "target"
             else model.cfg.src_phone_vocab)
    syms = [v for v in range(vocab) if v != EOS]
    best, best_score = None, -np.inf
    for n in range(cfg.max_len + 1):
        for toks in itertools.product(syms, repeat=n):
            toks = list(toks)
            finished = n < cfg.max_len
            score = (sequence_logprob(model, enc, which, toks, finished)
                     / length_penalty(n, cfg.length_penalty))
            if score > best_score:
                best, best_score = toks, score
    return best


def test_06_metric_oracles_are_exact():
    # edit distance equals exhaustive edit-script search: the full binary
    # cross product to length 6 plus the ternary one to length 4
    bin_seqs = [list(p) for n in range(7)
                for p in itertools.product((0, 1), repeat=n)]
    tri_seqs = [list(p) for n in range(5)
                for p in itertools.product((0, 1, 2), repeat=n)]
    for seqs in (bin_seqs, tri_seqs):
        for ref in seqs:
            if not ref:
                continue
            for hyp in seqs:
                assert levenshtein(ref, hyp) == _edit_script_search(ref, hyp), \
                    (ref, hyp)

    # beam search equals exhaustive enumeration whenever the beam covers
    # the branching factor (3 non-terminal symbols, beam 3)
    for seed in range(6):
        model = S2STModel(toy_config(4, 4, **TINY), seed=seed)
        model.eval()
        rng = np.random.default_rng(seed)
        mel = rng.normal(size=(1, 9, 80)).astype(np.float32)
        enc = model.encode(mel, np.ones((1, 9), bool))
        for which in ("target", "source"):
            for max_len in (1, 2, 3):
                cfg = DecodeConfig(mode="beam", beam_size=3, max_len=max_len)
                assert (decode_phonemes(model, enc, which, cfg)
                        == _enumerate_best(model, enc, which, cfg)), \
                    (seed, which, max_len)
        greedy = decode_phonemes(model, enc, "target",
                                 DecodeConfig(max_len=3))
        beam1 = decode_phonemes(model, enc, "target",
                                DecodeConfig(mode="beam", beam_size=1,
                                             max_len=3))
        assert greedy == beam1

    # wider-vocabulary spot checks where beam 3 still finds the optimum
    for seed in (0, 2, 5):
        model = S2STModel(toy_config(6, 6, **TINY), seed=seed)
        model.eval()
        rng = np.random.default_rng(seed)
        mel = rng.normal(size=(1, 11, 80)).astype(np.float32)
        enc = model.encode(mel, np.ones((1, 11), bool))
        cfg = DecodeConfig(mode="beam", beam_size=3, max_len=3)
        assert (decode_phonemes(model, enc, "target", cfg)
                == _enumerate_best(model, enc, "target", cfg))

    # frozen BLEU regression constants
    short_by_one = 100.0 * math.exp(1.0 - 4.0 / 3.0)
    assert bleu(["the cat sat"], ["the cat sat down"]) == pytest.approx(
        71.65313105737893, abs=1e-6)
    assert bleu(["the cat sat"], ["the cat sat down"]) == pytest.approx(
        short_by_one, abs=1e-9)
    assert bleu(["abc"], ["abcd"], "char") == pytest.approx(short_by_one,
                                                            abs=1e-9)
    assert bleu(["5 6 4"], ["5 6 4 2"], "phone") == pytest.approx(
        short_by_one, abs=1e-9)
    assert bleu(["the the the"], ["the cat"]) == pytest.approx(
        100.0 * (1.0 / 18.0) ** 0.25, abs=1e-6)
    assert bleu(["x y z w"], ["x y z w"]) == 100.0
    assert bleu(["a b"], ["c d"]) == 0.0


# ------------------------------------------------------------- criterion 7


def _random_manifest(rng, n):
    records, durations, frames = [], {}, {}
    words = ["uno", "dos", "tres", "quatro"]
    for i in range(n):
        rid = f"r{i:04d}"
        src_text = (" ".join(rng.choice(words, size=rng.integers(1, 5)))
                    if rng.random() > 0.04 else "  ")
        tgt_text = ("one two" if rng.random() > 0.5 else "")
        records.append(UtteranceRecord(
            id=rid, src_audio=f"audio/{rid}.wav", src_sr=16000,
            src_text=src_text, category="secondary", tgt_text=tgt_text,
            tgt_text_origin="pseudo" if tgt_text else "",
            failed="tts: simulated" if rng.random() < 0.06 else ""))
        durations[rid] = float(rng.uniform(0.2, 5.0))
        frames[rid] = int(rng.integers(20, 520))
    return CorpusManifest(records, "secondary"), durations, frames


def test_07_pipeline_stages_conserve_records(tmp_path):
    rng = np.random.default_rng(77)
    manifest, durations, frames = _random_manifest(rng, 1000)

    # filtering partitions the manifest, tagging the first violated rule
    rules = [EmptyTextRule(), SynthesisFailedRule(),
             MaxDurationRule(4.0, duration_fn=lambda r: durations[r.id])]
    kept, dropped = filter_corpus(manifest, rules)
    assert len(kept.records) + len(dropped) == 1000
    kept_ids = [r.id for r in kept.records]
    drop_ids = [d.record.id for d in dropped]
    assert sorted(kept_ids + drop_ids) == sorted(r.id for r in manifest.records)
    assert not set(kept_ids) & set(drop_ids)
    by_id = {r.id: r for r in manifest.records}
    for d in dropped:
        r = by_id[d.record.id]
        if not r.src_text.strip() or (r.tgt_text_origin and not r.tgt_text.strip()):
            expect = "empty_text"
        elif r.failed:
            expect = "synthesis_failed"
        else:
            expect = "max_duration"
            assert durations[r.id] > 4.0
        assert d.reason == expect
    for r in kept.records:
        assert r.src_text.strip() and not r.failed
        assert durations[r.id] <= 4.0

    # upsampled mixing duplicates every primary record exactly d times
    for n_a, n_b in ((3, 17), (10, 10), (7, 100), (64, 512), (5, 12), (9, 40)):
        prim = CorpusManifest(
            [UtteranceRecord(id=f"p{i}", src_audio="a.wav", src_sr=16000,
                             src_text="x", category="primary")
             for i in range(n_a)], "primary")
        sec = CorpusManifest(
            [UtteranceRecord(id=f"s{i}", src_audio="a.wav", src_sr=16000,
                             src_text="x", category="secondary")
             for i in range(n_b)], "secondary")
        d = upsample_factor(n_a, n_b)
        assert d == max(1, int(math.floor(n_b / n_a + 0.5)))
        mixed = mix_upsample(prim, sec, seed=5)
        assert len(mixed.records) == n_b + d * n_a
        roots = {}
        for r in mixed.records:
            roots[r.id.split("~")[0]] = roots.get(r.id.split("~")[0], 0) + 1
        assert all(roots[f"p{i}"] == d for i in range(n_a))
        assert all(roots[f"s{i}"] == 1 for i in range(n_b))
        again = mix_upsample(prim, sec, seed=5)
        assert [r.id for r in again.records] == [r.id for r in mixed.records]

    # token batching: caps hold exactly, order and multiset are preserved
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        batches = batch_by_tokens(manifest.records, 400,
                                  frames_fn=lambda r: frames[r.id])
    flat = [r.id for b in batches for r in b.records]
    assert flat == [r.id for r in manifest.records]
    for b in batches:
        assert b.token_count == sum(frames[r.id] for r in b.records)
        assert b.token_count <= 400 or len(b.records) == 1
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        by_len = batch_by_tokens(manifest.records, 400, sort_by_length=True,
                                 frames_fn=lambda r: frames[r.id])
    flat_len = [frames[r.id] for b in by_len for r in b.records]
    assert flat_len == sorted(flat_len, reverse=True)
    assert sorted(r.id for b in by_len for r in b.records) == sorted(
        r.id for r in manifest.records)

    # client replay rebuilds byte-identical manifests from the transcript
    def backend(requests):
        out = {}
        for req in requests:
            if hash(req["text"]) % 11 == 0:
                out[req["id"]] = {"ok": False, "err": "simulated"}
            elif req["task"] == "mt":
                out[req["id"]] = {"ok": True,
                                  "text": " ".join(reversed(req["text"].split()))}
            else:
                out[req["id"]] = {"ok": True,
                                  "audio": f"synth/{req['id']}.wav"}
        return out

    transcript = tmp_path / "transcript.jsonl"
    live = CallableClient(backend, transcript_path=transcript)
    first = synthesize_targets(pseudo_translate(kept, live), live)
    p_live = tmp_path / "live.jsonl"
    write_manifest(first, p_live)

    replay = ReplayClient(transcript)
    second = synthesize_targets(pseudo_translate(kept, replay), replay)
    p_replay = tmp_path / "replay.jsonl"
    write_manifest(second, p_replay)
    assert p_live.read_bytes() == p_replay.read_bytes()


# ------------------------------------------------------------- criterion 8


def _run_cli_pipeline(root):
    corpus = root / "corpus"
    out = root / "runs"
    assert run_command(["gen-toy", "--out", str(corpus), "--primary", "8",
                        "--secondary", "12", "--heldout", "4", "--seed", "11",
                        "--conflict", "0.4"]) == 0
    config = dict(
        profile="toy", seed=11,
        model=dict(prompt_enabled=True),
        paths=dict(primary="corpus/primary.jsonl",
                   secondary="corpus/secondary.jsonl",
                   heldout="corpus/heldout.jsonl",
                   templates="corpus/templates.json",
                   out_dir=str(out)),
        stages=[dict(kind="pretrain", max_steps=6, batch_tokens=600),
                dict(kind="prompt", max_steps=6, batch_tokens=600)])
    cfg_path = root / "run.json"
    cfg_path.write_text(json.dumps(config))
    assert run_command(["pretrain", "--config", str(cfg_path)]) == 0
    pre_ckpt = out / "pretrain" / "ckpt-pretrain-final.ckpt"
    assert run_command(["prompttune", "--config", str(cfg_path),
                        "--init", str(pre_ckpt)]) == 0
    prompt_ckpt = out / "prompt" / "ckpt-prompt-final.ckpt"
    assert run_command(["evaluate", "--config", str(cfg_path),
                        "--manifest", str(corpus / "heldout.jsonl"),
                        "--ckpt", str(prompt_ckpt)]) == 0
    report = out / "eval" / "eval_report.json"
    return (pre_ckpt.read_bytes(), prompt_ckpt.read_bytes(),
            report.read_bytes())


def test_08_end_to_end_runs_are_bit_identical(tmp_path):
    first = _run_cli_pipeline(tmp_path / "a")
    second = _run_cli_pipeline(tmp_path / "b")
    names = ("pretrain checkpoint", "prompt checkpoint", "eval report")
    for name, x, y in zip(names, first, second):
        assert x == y, f"{name} differs between identical runs"


# ----------------------------------------------- stage-level sanity checks


def test_09_every_stage_halves_its_smoothed_loss(tmp_path):
    spec = default_toy_spec(24, 96, seed=40, conflict_fraction=0.5)
    primary, secondary = generate_toy_corpus(spec, tmp_path)
    world, cfg, ex = _world_model(spec)

    logs = {}
    pre = S2STModel(cfg, seed=9)
    log = tmp_path / "pretrain.jsonl"
    ck = run_stage(pre, _stage("pretrain", 400, 9, batch_tokens=600),
                   secondary=secondary, extractor=ex, log_path=log)
    logs["pretrain"] = log
    for kind in ("finetune", "mixed", "prompt"):
        model = model_from_checkpoint(ck)
        log = tmp_path / f"{kind}.jsonl"
        run_stage(model, _stage(kind, 400, 9, batch_tokens=600),
                  primary=primary,
                  secondary=secondary if kind != "finetune" else None,
                  extractor=ex, log_path=log)
        logs[kind] = log

    for kind, log in logs.items():
        ratio = _ma_ratio(log)
        assert ratio < 0.5, f"{kind}: smoothed loss ratio {ratio:.3f}"


def test_10_quality_metrics_rank_checkpoints_together(regime_runs):
    order = ("baseline", "pre_ft", "mixed", "prompt")
    positive = 0
    for seed_stats in regime_runs["seeds"]:
        tps = [seed_stats["tp"][k] for k in order]
        l1s = [seed_stats["l1"][k] for k in order]
        rho = spearmanr(tps, [-v for v in l1s]).statistic
        positive += rho > 0
    assert positive >= 4, (
        f"Tp-BLEU and spectrogram L1 agreed in {positive}/5 seeds: "
        f"{[(s['tp'], s['l1']) for s in regime_runs['seeds']]}")
