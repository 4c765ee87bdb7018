"""Staged training: pre-train, fine-tune, mixed-tune, prompt-tune.

One logical training stream. Everything random is derived from the
stage seed plus the step index, so a run is a pure function of
(seed, config, manifests): batches are packed once in manifest-sorted
order, the batch visited at step s depends only on s, and dropout is
reseeded per step. Resuming from a checkpoint therefore replays the
exact arithmetic of an uninterrupted run.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
from dataclasses import dataclass

import numpy as np

from ..audio.augment import spec_augment
from ..audio.types import MelSpectrogram, SpecAugmentPolicy
from ..data.batching import batch_by_tokens
from ..data.features import Example, FeatureExtractor, normalized_silence
from ..data.mixing import mix_upsample
from ..data.phonemize import BOS, EOS, PAD
from ..data.records import CorpusManifest
from ..errors import ConfigError, ContractError, NumericError
from ..model.config import ModelConfig
from ..model.losses import LossBreakdown, LossTargets, pretrain_loss, total_loss
from ..model.model import S2STModel
from ..nd.tensor import backward
from ..seeding import derive_rng
from .adam import OptimizerState, clip_grad_norm, init_optimizer, optimizer_step
from .checkpoint import Checkpoint, restore_model, save_checkpoint, snapshot
from .schedule import lr_at_step

STAGE_KINDS = ("pretrain", "finetune", "mixed", "prompt")

# parameter-name prefixes that stay trainable when everything else freezes
PROMPT_PARAM_PREFIXES = ("prompt_embed.", "input_prompt_embed.")


@dataclass
class StageConfig:
    """One training stage: what to train on, for how long, and how hard."""

    kind: str
    base_lr: float
    warmup_steps: int
    max_steps: int
    batch_tokens: int
    dropout: float = 0.1
    seed: int = 0
    w_src: float | None = None    # None inherits the model config weight
    w_tgt: float | None = None
    clip_norm: float = 1.0
    checkpoint_every: int = 0     # 0 = final checkpoint only
    freeze_non_prompt: bool = False
    alternate_tasks: bool = False  # pretrain: alternate ASR/ST batches
    use_specaugment: bool = False
    specaugment: SpecAugmentPolicy = dataclasses.field(
        default_factory=SpecAugmentPolicy)

    def __post_init__(self):
        if self.kind not in STAGE_KINDS:
            raise ConfigError(
                f"stage kind {self.kind!r} not in {STAGE_KINDS}")
        if self.base_lr <= 0:
            raise ConfigError(f"base_lr must be positive, got {self.base_lr}")
        if self.warmup_steps < 1:
            raise ConfigError(
                f"warmup_steps must be >= 1, got {self.warmup_steps}")
        if self.max_steps < 1:
            raise ConfigError(f"max_steps must be >= 1, got {self.max_steps}")
        if self.batch_tokens < 1:
            raise ConfigError(
                f"batch_tokens must be >= 1, got {self.batch_tokens}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.clip_norm < 0:
            raise ConfigError(f"clip_norm must be >= 0, got {self.clip_norm}")
        if self.checkpoint_every < 0:
            raise ConfigError("checkpoint_every must be >= 0")
        for name in ("w_src", "w_tgt"):
            w = getattr(self, name)
            if w is not None and w < 0:
                raise ConfigError(f"{name} must be >= 0, got {w}")
        if self.freeze_non_prompt and self.kind != "prompt":
            raise ConfigError("freeze_non_prompt only applies to prompt stages")
        if self.alternate_tasks and self.kind != "pretrain":
            raise ConfigError("alternate_tasks only applies to pre-training")


@dataclass
class TrainBatch:
    """Padded arrays for one step, plus the loss reference tensors."""

    ids: list
    categories: list
    src: np.ndarray        # (B, T, 80) float32, silence-padded
    src_mask: np.ndarray   # (B, T) bool
    src_in: np.ndarray     # (B, Ls) int, BOS-prefixed phone ids
    tgt_in: np.ndarray     # (B, Lt) int
    targets: LossTargets


def stage_dataset(kind: str, primary: CorpusManifest | None,
                  secondary: CorpusManifest | None,
                  seed: int) -> CorpusManifest:
    """Route each stage to its corpus: B, A, or upsampled A+B."""
    if kind == "pretrain":
        if secondary is None or not secondary.records:
            raise ContractError("pre-training needs a non-empty secondary corpus")
        return secondary
    if kind == "finetune":
        if primary is None or not primary.records:
            raise ContractError("fine-tuning needs a non-empty primary corpus")
        return primary
    if kind in ("mixed", "prompt"):
        if primary is None or secondary is None:
            raise ContractError(f"{kind} tuning needs both corpora")
        return mix_upsample(primary, secondary, seed)
    raise ConfigError(f"unknown stage kind {kind!r}")


def _phone_block(examples, side: str):
    """BOS-prefixed inputs, EOS-terminated outputs, and their shared mask."""
    seqs = [ex.src_phones if side == "src" else ex.tgt_phones
            for ex in examples]
    width = max(len(s) for s in seqs) + 1
    b = len(seqs)
    ins = np.full((b, width), PAD, dtype=np.int64)
    outs = np.full((b, width), PAD, dtype=np.int64)
    mask = np.zeros((b, width), dtype=bool)
    for i, s in enumerate(seqs):
        n = len(s)
        ins[i, 0] = BOS
        ins[i, 1:n + 1] = s
        outs[i, :n] = s
        outs[i, n] = EOS
        mask[i, :n + 1] = True
    return ins, outs, mask


def collate(examples: list, cfg: ModelConfig,
            need_target: bool = True) -> TrainBatch:
    """Pad a list of featurized examples into one TrainBatch.

    Audio is padded with the normalized-silence value so padding looks
    like quiet rather than mid-energy speech; masks exclude it from every
    loss regardless.
    """
    if not examples:
        raise ContractError("cannot collate an empty example list")
    pad = normalized_silence(cfg.feat_offset, cfg.feat_scale)
    b = len(examples)
    t_max = max(ex.src_feat.shape[0] for ex in examples)
    src = np.full((b, t_max, cfg.n_mels), pad, dtype=np.float32)
    src_mask = np.zeros((b, t_max), dtype=bool)
    for i, ex in enumerate(examples):
        n = ex.src_feat.shape[0]
        if n == 0:
            raise ContractError(f"example {ex.id} has an empty source feature")
        src[i, :n] = ex.src_feat
        src_mask[i, :n] = True
    src_in, src_out, src_pm = _phone_block(examples, "src")
    tgt_in, tgt_out, tgt_pm = _phone_block(examples, "tgt")

    tgt_mel = frame_mask = stop_targets = step_mask = None
    if need_target:
        r = cfg.reduction_factor
        lens = []
        for ex in examples:
            if ex.tgt_feat is None:
                raise ContractError(
                    f"example {ex.id} lacks target audio for this stage")
            if ex.tgt_feat.shape[0] == 0:
                raise ContractError(f"example {ex.id} has an empty target feature")
            lens.append(ex.tgt_feat.shape[0])
        s_max = max(math.ceil(n / r) for n in lens)
        tgt_mel = np.full((b, s_max * r, cfg.n_mels), pad, dtype=np.float32)
        frame_mask = np.zeros((b, s_max * r), dtype=bool)
        stop_targets = np.zeros((b, s_max), dtype=np.float32)
        step_mask = np.zeros((b, s_max), dtype=bool)
        for i, ex in enumerate(examples):
            n = lens[i]
            steps = math.ceil(n / r)
            tgt_mel[i, :n] = ex.tgt_feat
            frame_mask[i, :n] = True
            stop_targets[i, steps - 1] = 1.0
            step_mask[i, :steps] = True

    targets = LossTargets(src_phones_out=src_out, src_phone_mask=src_pm,
                          tgt_phones_out=tgt_out, tgt_phone_mask=tgt_pm,
                          tgt_mel=tgt_mel, frame_mask=frame_mask,
                          stop_targets=stop_targets, step_mask=step_mask)
    return TrainBatch(ids=[ex.id for ex in examples],
                      categories=[ex.category for ex in examples],
                      src=src, src_mask=src_mask, src_in=src_in,
                      tgt_in=tgt_in, targets=targets)


def _augment_examples(examples: list, stage: StageConfig, step: int) -> list:
    """Fresh time/frequency masks per visit, seeded by (stage, step, id)."""
    out = []
    for ex in examples:
        seed = derive_rng("specaug", stage.seed, step, ex.id).integers(2 ** 31)
        mel = MelSpectrogram(ex.src_feat, 16000, 160, "source")
        masked = spec_augment(mel, stage.specaugment, int(seed))
        out.append(dataclasses.replace(ex, src_feat=masked.frames))
    return out


def build_batches(records, stage: StageConfig, extractor: FeatureExtractor):
    """Token-budget batches, packed longest-first for stable padding."""
    def frames(rec):
        return extractor.features_for_wav(rec.src_audio).shape[0]

    batches = batch_by_tokens(records, stage.batch_tokens,
                              sort_by_length=True, frames_fn=frames)
    if not batches:
        raise ContractError("stage dataset produced no batches")
    return batches


def batch_for_step(batches: list, seed: int, step: int):
    """The batch visited at a 1-based step; a pure function of its inputs.

    Each epoch visits every batch once in an order shuffled per epoch.
    """
    if step < 1:
        raise ContractError(f"steps are 1-based, got {step}")
    n = len(batches)
    epoch, idx = divmod(step - 1, n)
    order = derive_rng("batch-order", seed, epoch).permutation(n)
    return batches[order[idx]]


def train_step(model: S2STModel, batch: TrainBatch, stage: StageConfig,
               opt: OptimizerState, named_params, step: int):
    """Forward, backward, clip, Adam update. Returns (LossBreakdown, lr)."""
    lr = lr_at_step(step, stage.base_lr, stage.warmup_steps)
    model.reseed_dropout(("dropout", stage.seed, step))
    prompt = batch.categories if stage.kind == "prompt" else None
    try:
        enc = model.encode(batch.src, batch.src_mask, prompt=prompt)
        aux_src = model.decode_auxiliary_teacher_forced(
            enc, "source", batch.src_in, batch.targets.src_phone_mask)
        aux_tgt = model.decode_auxiliary_teacher_forced(
            enc, "target", batch.tgt_in, batch.targets.tgt_phone_mask)
        if stage.kind == "pretrain":
            if stage.alternate_tasks:
                w_src, w_tgt = (1.0, 0.0) if step % 2 == 1 else (0.0, 1.0)
                breakdown, total = total_loss(None, aux_src, aux_tgt,
                                              batch.targets, model.cfg,
                                              w_src=w_src, w_tgt=w_tgt)
            else:
                breakdown, total = pretrain_loss(aux_src, aux_tgt,
                                                 batch.targets, model.cfg)
        else:
            out = model.decode_spectrogram_teacher_forced(
                enc, batch.targets.tgt_mel)
            breakdown, total = total_loss(out, aux_src, aux_tgt, batch.targets,
                                          model.cfg, w_src=stage.w_src,
                                          w_tgt=stage.w_tgt)
        grads = backward(total)
    except NumericError as exc:
        raise NumericError(
            f"non-finite value at step {step} on batch ids {batch.ids}: "
            f"{exc}") from exc
    if stage.clip_norm > 0:
        norm = clip_grad_norm(grads, stage.clip_norm)
        if not math.isfinite(norm):
            raise NumericError(
                f"non-finite gradient norm at step {step} on batch ids "
                f"{batch.ids}")
    optimizer_step(named_params, grads, opt, lr)
    return breakdown, lr


def trainable_parameters(model: S2STModel, stage: StageConfig):
    """The (name, Parameter) list this stage may update."""
    named = list(model.named_parameters())
    if stage.freeze_non_prompt:
        named = [(n, p) for n, p in named
                 if n.startswith(PROMPT_PARAM_PREFIXES)]
        if not named:
            raise ConfigError("freeze_non_prompt left nothing trainable")
    return named


def _log_line(step: int, stage: StageConfig, lr: float,
              breakdown: LossBreakdown) -> str:
    row = {"step": step, "stage": stage.kind, "lr": lr}
    row.update(breakdown.as_dict())
    return json.dumps(row)


def run_stage(model: S2STModel, stage: StageConfig,
              primary: CorpusManifest | None = None,
              secondary: CorpusManifest | None = None,
              out_dir=None, extractor: FeatureExtractor | None = None,
              log_path=None, resume: Checkpoint | None = None) -> Checkpoint:
    """Run one full stage and return its final checkpoint.

    Passing resume (a checkpoint saved mid-stage by this same stage
    config) restores parameters and optimizer state and continues at
    resume.step + 1; the remaining steps replay bit-exactly.
    """
    if stage.kind == "prompt" and not model.cfg.prompt_enabled:
        raise ConfigError("prompt stage needs a model with prompt_enabled")
    dataset = stage_dataset(stage.kind, primary, secondary, stage.seed)
    extractor = extractor or FeatureExtractor(model.cfg.feat_offset,
                                              model.cfg.feat_scale)
    need_target = stage.kind != "pretrain"
    named_params = trainable_parameters(model, stage)

    start_step = 1
    if resume is not None:
        if resume.stage_kind != stage.kind:
            raise ContractError(
                f"resume checkpoint is from stage {resume.stage_kind!r}, "
                f"not {stage.kind!r}")
        if resume.seed != stage.seed:
            raise ContractError(
                f"resume checkpoint seed {resume.seed} differs from stage "
                f"seed {stage.seed}; this would not replay the same run")
        restore_model(resume, model)
        opt = OptimizerState(m={k: a.copy() for k, a in resume.opt.m.items()},
                             v={k: a.copy() for k, a in resume.opt.v.items()},
                             step=resume.opt.step)
        start_step = resume.step + 1
    else:
        opt = init_optimizer(named_params)

    model.set_dropout(stage.dropout)
    model.train()
    batches = build_batches(dataset.records, stage, extractor)

    log_file = open(log_path, "a") if log_path else None
    try:
        last = start_step - 1
        for step in range(start_step, stage.max_steps + 1):
            chosen = batch_for_step(batches, stage.seed, step)
            examples = [extractor.example(r, need_target)
                        for r in chosen.records]
            if stage.use_specaugment:
                examples = _augment_examples(examples, stage, step)
            tb = collate(examples, model.cfg, need_target)
            breakdown, lr = train_step(model, tb, stage, opt, named_params,
                                       step)
            if log_file:
                log_file.write(_log_line(step, stage, lr, breakdown) + "\n")
                log_file.flush()
            last = step
            if (stage.checkpoint_every and out_dir
                    and step % stage.checkpoint_every == 0):
                ck = snapshot(model, opt, stage.kind, step, stage.seed)
                save_checkpoint(ck, os.path.join(
                    out_dir, f"ckpt-{stage.kind}-{step:06d}.ckpt"))
    finally:
        if log_file:
            log_file.close()

    final = snapshot(model, opt, stage.kind, last, stage.seed)
    if out_dir:
        save_checkpoint(final, os.path.join(out_dir,
                                            f"ckpt-{stage.kind}-final.ckpt"))
    return final
