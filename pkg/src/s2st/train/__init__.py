"""Staged training: schedule, optimizer, checkpoints, stage runner."""

from .adam import (BETA1, BETA2, EPS, OptimizerState, clip_grad_norm,
                   init_optimizer, optimizer_step, zero_grads_like)
from .checkpoint import (Checkpoint, load_checkpoint, model_from_checkpoint,
                         restore_model, save_checkpoint, snapshot)
from .schedule import lr_at_step
from .stages import (PROMPT_PARAM_PREFIXES, StageConfig, TrainBatch,
                     batch_for_step, build_batches, collate, run_stage,
                     stage_dataset, train_step, trainable_parameters)

__all__ = [
    "BETA1", "BETA2", "Checkpoint", "EPS", "OptimizerState",
    "PROMPT_PARAM_PREFIXES", "StageConfig", "TrainBatch", "batch_for_step",
    "build_batches", "clip_grad_norm", "collate", "init_optimizer",
    "load_checkpoint", "lr_at_step", "model_from_checkpoint",
    "optimizer_step", "restore_model", "run_stage", "save_checkpoint",
    "snapshot", "stage_dataset", "train_step", "trainable_parameters",
    "zero_grads_like",
]
