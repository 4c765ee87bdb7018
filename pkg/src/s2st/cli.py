"""Command-line entry point: corpus generation and preparation, staged
training, single-utterance inference, evaluation, and the gradient
self-check, all driven by a JSON run config.

Every subcommand is a thin adapter over library operations and writes a
run_manifest.json listing the artifacts it produced; exit status is 0
exactly when that manifest records no errors (2 for usage errors).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
from pathlib import Path

import numpy as np

from .audio.frontend import affine_denormalize
from .audio.griffin_lim import griffin_lim_invert
from .audio.io import write_mel, write_wav
from .audio.types import FrontendConfig, MelSpectrogram
from .checks import gradient_suite
from .config import RunConfig, load_config
from .data import (CallableClient, CodeSwitchRule, EmptyTextRule,
                   FeatureExtractor, MaxDurationRule, SubprocessClient,
                   SynthesisFailedRule, ToyBackend, ToyWorld,
                   default_toy_spec, filter_corpus, generate_toy_corpus,
                   phonemize_manifest, pseudo_translate, read_manifest,
                   synthesize_targets, write_manifest)
from .errors import ConfigError, S2stError
from .eval import DecodeConfig, asr_bleu, evaluate, format_table, write_report
from .model import S2STModel
from .train import load_checkpoint, model_from_checkpoint, run_stage

# subcommand name -> training stage kind
TRAIN_KINDS = {"pretrain": "pretrain", "finetune": "finetune",
               "mixtune": "mixed", "prompttune": "prompt"}


class RunManifest:
    """What a command produced, for scripting and auditability."""

    def __init__(self, command: str, argv: list):
        self.command = command
        self.argv = list(argv)
        self.artifacts: list = []
        self.errors: list = []
        self.out_dir: Path | None = None

    def add(self, *paths) -> None:
        self.artifacts.extend(str(p) for p in paths)

    def write(self) -> None:
        if self.out_dir is None:
            return
        self.out_dir.mkdir(parents=True, exist_ok=True)
        doc = {"command": self.command, "argv": self.argv,
               "status": "failed" if self.errors else "ok",
               "errors": self.errors, "artifacts": self.artifacts}
        path = self.out_dir / "run_manifest.json"
        path.write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


# ------------------------------------------------------------ subcommands

def cmd_gen_toy(args, rm: RunManifest) -> None:
    out = Path(args.out)
    rm.out_dir = out
    spec = default_toy_spec(n_primary=args.primary,
                            n_secondary=args.secondary,
                            seed=args.seed,
                            conflict_fraction=args.conflict,
                            n_heldout=args.heldout,
                            utterance_len_range=(args.min_len, args.max_len))
    primary, secondary = generate_toy_corpus(spec, out)
    rm.add(out / "primary.jsonl", out / "secondary.jsonl",
           out / "secondary_asr.jsonl", out / "templates.json")
    if args.heldout:
        rm.add(out / "heldout.jsonl")
    print(f"toy corpus: {len(primary.records)} primary + "
          f"{len(secondary.records)} secondary records in {out}")


def _prepare_clients(cfg: RunConfig, out_dir: Path):
    transcript = out_dir / "client_transcript.jsonl"
    if cfg.paths.mt_command or cfg.paths.tts_command:
        if not (cfg.paths.mt_command and cfg.paths.tts_command):
            raise ConfigError(
                "paths.mt_command and paths.tts_command must be configured "
                "together")
        return (SubprocessClient(cfg.paths.mt_command, transcript),
                SubprocessClient(cfg.paths.tts_command, transcript))
    if not cfg.paths.templates:
        raise ConfigError(
            "prepare needs helper commands (paths.mt_command/tts_command) "
            "or paths.templates for the built-in toy helpers")
    world = ToyWorld.load(cfg.paths.templates)
    backend = ToyBackend(world, out_dir / "tts")
    client = CallableClient(backend.handle, transcript)
    return client, client


def cmd_prepare(args, rm: RunManifest) -> None:
    cfg = load_config(args.config)
    out_path = Path(args.out)
    rm.out_dir = out_path.parent
    manifest = read_manifest(args.input)
    mt, tts = _prepare_clients(cfg, out_path.parent)

    manifest = pseudo_translate(manifest, mt)
    manifest = synthesize_targets(manifest, tts)

    rules = [EmptyTextRule(), SynthesisFailedRule()]
    if args.max_seconds:
        rules.append(MaxDurationRule(args.max_seconds))
    if cfg.paths.templates:
        world = ToyWorld.load(cfg.paths.templates)
        rules.append(CodeSwitchRule(frozenset("".join(world.src_vocab)),
                                    frozenset("".join(world.tgt_vocab))))
        manifest, dropped = filter_corpus(manifest, rules)
        manifest = phonemize_manifest(manifest, world.src_lexicon,
                                      world.tgt_lexicon,
                                      world.src_phone_vocab,
                                      world.tgt_phone_vocab,
                                      oov_policy=args.oov)
    else:
        manifest, dropped = filter_corpus(manifest, rules)

    write_manifest(manifest, out_path)
    dropped_path = out_path.parent / (out_path.stem + ".dropped.jsonl")
    with open(dropped_path, "w", encoding="utf-8") as fh:
        for d in dropped:
            fh.write(json.dumps({"id": d.record.id, "reason": d.reason}) + "\n")
    rm.add(out_path, dropped_path, out_path.parent / "client_transcript.jsonl")
    print(f"prepared {len(manifest.records)} records "
          f"({len(dropped)} dropped) -> {out_path}")


def _load_manifests(cfg: RunConfig):
    primary = (read_manifest(cfg.paths.primary, "primary")
               if cfg.paths.primary else None)
    secondary = (read_manifest(cfg.paths.secondary, "secondary")
                 if cfg.paths.secondary else None)
    return primary, secondary


def cmd_train(args, rm: RunManifest) -> None:
    kind = TRAIN_KINDS[args.command]
    cfg = load_config(args.config)
    stage = cfg.stage(kind)
    overrides = {}
    if args.max_steps is not None:
        overrides["max_steps"] = args.max_steps
    if args.lr is not None:
        overrides["base_lr"] = args.lr
    if args.seed is not None:
        overrides["seed"] = args.seed
    if overrides:
        stage = dataclasses.replace(stage, **overrides)

    stage_dir = cfg.out_root(args.out_dir) / kind
    rm.out_dir = stage_dir
    stage_dir.mkdir(parents=True, exist_ok=True)

    resume = None
    if args.resume:
        resume = load_checkpoint(args.resume)
    if args.init:
        ckpt = load_checkpoint(args.init)
        if ckpt.config.fingerprint() != cfg.model.fingerprint():
            raise ConfigError(
                f"--init checkpoint model config {ckpt.config.fingerprint()} "
                f"differs from run config {cfg.model.fingerprint()}")
        model = model_from_checkpoint(ckpt, seed=cfg.seed)
    else:
        model = S2STModel(cfg.model, seed=cfg.seed)

    primary, secondary = _load_manifests(cfg)
    log_path = stage_dir / "train_log.jsonl"
    final = run_stage(model, stage, primary=primary, secondary=secondary,
                      out_dir=stage_dir, log_path=log_path, resume=resume)
    final_path = stage_dir / f"ckpt-{kind}-final.ckpt"
    rm.add(final_path, log_path)
    print(f"{kind}: {final.step} steps done, checkpoint at {final_path}")


def _synthesize(model: S2STModel, feat: np.ndarray, sample_rate: int,
                prompt, stop_threshold: float, max_frames: int,
                gl_iterations: int):
    mask = np.ones(feat[None].shape[:2], dtype=bool)
    enc = model.encode(feat[None], mask, prompt=prompt)
    max_steps = max(1, math.ceil(max_frames / model.cfg.reduction_factor))
    mel_norm, _ = model.infer_spectrogram(enc, stop_threshold=stop_threshold,
                                          max_steps=max_steps)
    mel_log = affine_denormalize(mel_norm, model.cfg.feat_offset,
                                 model.cfg.feat_scale)
    fcfg = FrontendConfig.for_rate(sample_rate)
    mel = MelSpectrogram(mel_log, sample_rate, fcfg.hop_length, "predicted")
    wave = griffin_lim_invert(mel, fcfg, iterations=gl_iterations)
    return mel, wave


def cmd_translate(args, rm: RunManifest) -> None:
    out_path = Path(args.out)
    rm.out_dir = out_path.parent
    rm.out_dir.mkdir(parents=True, exist_ok=True)
    model = model_from_checkpoint(load_checkpoint(args.ckpt))
    model.eval()
    extractor = FeatureExtractor(model.cfg.feat_offset, model.cfg.feat_scale)
    feat = extractor.features_for_wav(args.input)
    mel, wave = _synthesize(model, feat, args.sample_rate, args.prompt,
                            args.stop_threshold, args.max_frames,
                            args.gl_iters)
    mel_path = out_path.with_suffix(".mel")
    write_mel(mel_path, mel)
    write_wav(out_path, wave)
    rm.add(out_path, mel_path)
    print(f"translated {args.input} -> {out_path} "
          f"({mel.n_frames} frames, {wave.samples.shape[0]} samples)")


def _asr_client(cfg: RunConfig, out_dir: Path):
    transcript = out_dir / "asr_transcript.jsonl"
    if cfg.paths.asr_command:
        return SubprocessClient(cfg.paths.asr_command, transcript)
    if cfg.paths.templates:
        world = ToyWorld.load(cfg.paths.templates)
        backend = ToyBackend(world, out_dir / "helper")
        return CallableClient(backend.handle, transcript)
    raise ConfigError(
        "--asr needs paths.asr_command or paths.templates in the config")


def cmd_evaluate(args, rm: RunManifest) -> None:
    cfg = load_config(args.config) if args.config else None
    out_dir = (cfg.out_root(args.out_dir) if cfg
               else Path(args.out_dir or "runs")) / "eval"
    rm.out_dir = out_dir
    out_dir.mkdir(parents=True, exist_ok=True)

    model = model_from_checkpoint(load_checkpoint(args.ckpt))
    manifest = read_manifest(args.manifest)
    decode_cfg = DecodeConfig(mode="greedy" if args.beam == 1 else "beam",
                              beam_size=args.beam, max_len=args.max_len,
                              length_penalty=args.length_penalty)
    prompt = None if args.prompt == "none" else args.prompt
    report = evaluate(model, manifest, decode_cfg=decode_cfg, prompt=prompt)

    if args.asr:
        if cfg is None:
            raise ConfigError("--asr needs --config for the helper command")
        client = _asr_client(cfg, out_dir)
        res = asr_bleu(model, manifest, client, cfg.tgt_sample_rate,
                       out_dir / "asr", stop_threshold=args.stop_threshold,
                       max_frames=args.max_frames,
                       gl_iterations=args.gl_iters, prompt=prompt)
        note = res.reason or report.notes
        report = dataclasses.replace(report, asr_bleu=res.score,
                                     asr_coverage=res.coverage, notes=note)
        rm.add(out_dir / "asr" / "asr_transcripts.jsonl")

    json_path = out_dir / "eval_report.json"
    table_path = out_dir / "eval_report.txt"
    write_report(report, json_path)
    table = format_table(report)
    table_path.write_text(table + "\n", encoding="utf-8")
    rm.add(json_path, table_path)
    print(table)


def cmd_gradcheck(args, rm: RunManifest) -> None:
    rm.out_dir = Path(args.out_dir) if args.out_dir else None
    results = gradient_suite(primitive_tol=args.tol,
                             model_tol=args.model_tol,
                             model_entries=args.entries, seed=args.seed)
    for name, rep in results:
        print(f"{name:20s} {rep.summary()}")
    failed = [name for name, rep in results if not rep.passed]
    if failed:
        raise S2stError(f"gradient check failed for: {', '.join(failed)}")
    print(f"all {len(results)} gradient checks passed")


# ----------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="s2st",
        description="Direct speech-to-speech translation, desk scale.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-toy", help="synthesize the toy corpus")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--primary", type=int, default=64)
    p.add_argument("--secondary", type=int, default=512)
    p.add_argument("--heldout", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--conflict", type=float, default=0.0,
                   help="fraction of source phones whose secondary-domain "
                        "mapping disagrees with the primary one")
    p.add_argument("--min-len", type=int, default=3)
    p.add_argument("--max-len", type=int, default=8)
    p.set_defaults(func=cmd_gen_toy)

    p = sub.add_parser("prepare",
                       help="pseudo-translate, synthesize, filter, phonemize")
    p.add_argument("--config", required=True)
    p.add_argument("--in", dest="input", required=True,
                   help="input manifest (jsonl)")
    p.add_argument("--out", required=True, help="output manifest path")
    p.add_argument("--max-seconds", type=float, default=0.0,
                   help="drop source utterances longer than this (0 = keep)")
    p.add_argument("--oov", default="error", choices=("error", "skip"),
                   help="phonemization policy for out-of-lexicon words")
    p.set_defaults(func=cmd_prepare)

    for name in TRAIN_KINDS:
        p = sub.add_parser(name, help=f"run the {TRAIN_KINDS[name]} stage")
        p.add_argument("--config", required=True)
        p.add_argument("--out-dir", default=None,
                       help="output root (default: config, then "
                            "$S2ST_OUT_ROOT, then ./runs)")
        p.add_argument("--init", default=None,
                       help="checkpoint to warm-start parameters from")
        p.add_argument("--resume", default=None,
                       help="mid-stage checkpoint to continue")
        p.add_argument("--max-steps", type=int, default=None)
        p.add_argument("--lr", type=float, default=None)
        p.add_argument("--seed", type=int, default=None,
                       help="override the stage seed")
        p.set_defaults(func=cmd_train)

    p = sub.add_parser("translate", help="translate one utterance")
    p.add_argument("--in", dest="input", required=True, help="source wav")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True, help="output wav path")
    p.add_argument("--prompt", default=None,
                   choices=("primary", "secondary"))
    p.add_argument("--sample-rate", type=int, default=24000)
    p.add_argument("--stop-threshold", type=float, default=0.5)
    p.add_argument("--max-frames", type=int, default=400)
    p.add_argument("--gl-iters", type=int, default=40)
    p.set_defaults(func=cmd_translate)

    p = sub.add_parser("evaluate", help="score a checkpoint on a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--out-dir", default=None)
    p.add_argument("--beam", type=int, default=1)
    p.add_argument("--max-len", type=int, default=50)
    p.add_argument("--length-penalty", type=float, default=0.6)
    p.add_argument("--prompt", default="none",
                   choices=("none", "record", "primary", "secondary"))
    p.add_argument("--asr", action="store_true",
                   help="also transcribe synthesized speech and score BLEU")
    p.add_argument("--stop-threshold", type=float, default=0.5)
    p.add_argument("--max-frames", type=int, default=400)
    p.add_argument("--gl-iters", type=int, default=40)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--model-tol", type=float, default=1e-3)
    p.add_argument("--entries", type=int, default=3,
                   help="sampled entries per parameter for the model check")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default=None)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def run_command(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:  # argparse exits 2 on usage errors, 0 on --help
        return int(e.code or 0)
    rm = RunManifest(args.command, argv)
    status = 0
    try:
        args.func(args, rm)
    except S2stError as e:
        msg = f"{type(e).__name__}: {e}"
        if msg not in rm.errors:
            rm.errors.append(msg)
        print(f"error: {e}", file=sys.stderr)
        status = 1
    except OSError as e:
        rm.errors.append(f"OSError: {e}")
        print(f"error: {e}", file=sys.stderr)
        status = 1
    rm.write()
    return status


def main() -> None:
    sys.exit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    main()
