"""Adam with bias correction, plus global gradient-norm clipping.

Moments are keyed by parameter name rather than object identity so they
survive checkpoint round-trips. State lives in float32 like the
parameters themselves: everything a resumed run needs is then captured
bit-exactly by the checkpoint, and the per-step arithmetic is done in
float64 before casting back, which keeps the update accurate without
adding hidden state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError, ShapeError
from ..nd.tensor import Grads, Parameter

BETA1 = 0.9
BETA2 = 0.98
EPS = 1e-9


@dataclass
class OptimizerState:
    """First/second moment accumulators and a shared step counter."""

    m: dict = field(default_factory=dict)   # name -> float32 array
    v: dict = field(default_factory=dict)
    step: int = 0

    def __post_init__(self):
        if self.step < 0:
            raise ContractError(f"optimizer step must be >= 0, got {self.step}")
        if set(self.m) != set(self.v):
            raise ContractError("first/second moment tables name different parameters")


def init_optimizer(named_params) -> OptimizerState:
    """Zeroed moments for every (name, Parameter) pair."""
    m, v = {}, {}
    for name, p in named_params:
        m[name] = np.zeros(p.shape, dtype=np.float32)
        v[name] = np.zeros(p.shape, dtype=np.float32)
    return OptimizerState(m=m, v=v, step=0)


def clip_grad_norm(grads: Grads, max_norm: float) -> float:
    """Scale all gradients so the global L2 norm is at most max_norm.

    Returns the pre-clip norm. Zero-norm gradients are left alone.
    """
    if max_norm <= 0:
        raise ContractError(f"max_norm must be positive, got {max_norm}")
    norm = grads.global_norm()
    if norm > max_norm:
        grads.scale(max_norm / norm)
    return norm


def optimizer_step(named_params, grads: Grads, opt: OptimizerState,
                   lr: float, beta1: float = BETA1, beta2: float = BETA2,
                   eps: float = EPS) -> None:
    """One Adam update over the named parameters, in place.

    Parameters the loss never touched (grads.get returns None) are skipped
    entirely: no moment decay, no update. An explicit zero gradient, by
    contrast, decays the moments like any other value. The skip is what
    keeps stages that exclude a sub-network from leaving fingerprints on
    its parameters or optimizer state.
    """
    stale = set(opt.m) - {n for n, _ in named_params}
    if stale:
        raise ContractError(
            f"optimizer tracks unknown parameters: {sorted(stale)[:3]}")
    opt.step += 1
    t = opt.step
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for name, p in named_params:
        if name not in opt.m:
            raise ContractError(f"parameter {name!r} missing from optimizer state")
        g = grads.get(p)
        if g is None:
            continue
        if g.shape != p.shape or opt.m[name].shape != p.shape:
            raise ShapeError(
                f"parameter {name!r}: shapes param {p.shape}, grad {g.shape}, "
                f"moment {opt.m[name].shape} disagree")
        g64 = g.astype(np.float64)
        m = beta1 * opt.m[name].astype(np.float64) + (1.0 - beta1) * g64
        v = beta2 * opt.v[name].astype(np.float64) + (1.0 - beta2) * g64 * g64
        update = lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
        p.data = (p.data.astype(np.float64) - update).astype(np.float32)
        opt.m[name] = m.astype(np.float32)
        opt.v[name] = v.astype(np.float32)


def zero_grads_like(named_params) -> Grads:
    """Explicit all-zero gradients for every parameter (moments still decay)."""
    table = {}
    for _, p in named_params:
        if not isinstance(p, Parameter):
            raise ContractError("zero_grads_like expects Parameter values")
        table[id(p)] = (p, np.zeros(p.shape, dtype=np.float32))
    return Grads(table)
