"""Inverse-square-root learning rate schedule with linear warmup."""

from __future__ import annotations

import math

from ..errors import ContractError


def lr_at_step(step: int, base_lr: float, warmup_steps: int) -> float:
    """lr = base_lr * min(step/warmup, sqrt(warmup/step)).

    Rises linearly to exactly base_lr at step == warmup_steps, then decays
    as 1/sqrt(step). Steps are 1-based; the schedule is undefined at 0.
    """
    if step < 1:
        raise ContractError(f"schedule is defined for step >= 1, got {step}")
    if base_lr <= 0:
        raise ContractError(f"base_lr must be positive, got {base_lr}")
    if warmup_steps < 1:
        raise ContractError(f"warmup_steps must be >= 1, got {warmup_steps}")
    return base_lr * min(step / warmup_steps, math.sqrt(warmup_steps / step))
