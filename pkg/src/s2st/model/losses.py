"""Multi-task loss: spectrogram regression, stop token, weighted phone CE.

total = spec + stop + w_src * aux_src + w_tgt * aux_tgt, with padded
frames/steps/tokens contributing exactly zero. Pre-training zeroes the
spectrogram terms and reweights the two phone losses equally.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ContractError
from ..nd import ops
from ..nd.tensor import Tensor, as_tensor, default_dtype
from .config import ModelConfig
from .decoder import DecoderOutput


@dataclass
class LossBreakdown:
    spec_loss: float
    stop_loss: float
    aux_src_loss: float
    aux_tgt_loss: float
    total: float

    def as_dict(self) -> dict:
        return {"spec_loss": self.spec_loss, "stop_loss": self.stop_loss,
                "aux_src": self.aux_src_loss, "aux_tgt": self.aux_tgt_loss,
                "total": self.total}


@dataclass
class LossTargets:
    """Reference tensors for one batch; spectrogram fields optional."""

    src_phones_out: np.ndarray   # (B, Ls) ids, EOS-terminated
    src_phone_mask: np.ndarray   # (B, Ls) bool
    tgt_phones_out: np.ndarray
    tgt_phone_mask: np.ndarray
    tgt_mel: np.ndarray | None = None        # (B, T, n_mels)
    frame_mask: np.ndarray | None = None     # (B, T) bool
    stop_targets: np.ndarray | None = None   # (B, S) floats in {0, 1}
    step_mask: np.ndarray | None = None      # (B, S) bool


def masked_l1_l2(pred: Tensor, target: np.ndarray,
                 frame_mask: np.ndarray) -> Tensor:
    """Mean over unpadded frame entries of |d| + d^2."""
    n = int(frame_mask.sum()) * pred.shape[-1]
    if n == 0:
        raise ContractError("degenerate batch: every frame is padding")
    w = frame_mask[:, :, None].astype(default_dtype())
    diff = ops.sub(pred, as_tensor(np.asarray(target, dtype=default_dtype())))
    l1 = ops.sum_(ops.mul(ops.absolute(diff), w))
    l2 = ops.sum_(ops.mul(ops.mul(diff, diff), w))
    return ops.mul(ops.add(l1, l2), 1.0 / n)


def stop_bce(logits: Tensor, targets: np.ndarray, step_mask: np.ndarray,
             pos_weight: float) -> Tensor:
    """Binary cross-entropy per decoder step, positives upweighted."""
    n = int(step_mask.sum())
    if n == 0:
        raise ContractError("degenerate batch: every decoder step is padding")
    y = np.asarray(targets, dtype=default_dtype())
    w = step_mask.astype(default_dtype())
    # -log sigmoid(x) = softplus(-x); -log sigmoid(-x) = softplus(x)
    pos = ops.mul(ops.softplus(ops.neg(logits)), pos_weight * y)
    neg = ops.mul(ops.softplus(logits), 1.0 - y)
    return ops.mul(ops.sum_(ops.mul(ops.add(pos, neg), w)), 1.0 / n)


def smoothed_cross_entropy(logits: Tensor, targets: np.ndarray,
                           token_mask: np.ndarray, smoothing: float) -> Tensor:
    """Label-smoothed CE averaged over unpadded tokens."""
    b, length, vocab = logits.shape
    n = int(token_mask.sum())
    if n == 0:
        raise ContractError("degenerate batch: every token is padding")
    logp = ops.log_softmax(logits, axis=-1)
    onehot = np.zeros((b, length, vocab), dtype=default_dtype())
    ids = np.asarray(targets)
    rows, cols = np.indices((b, length))
    onehot[rows, cols, ids] = 1.0
    nll = ops.neg(ops.sum_(ops.mul(logp, onehot), axis=-1))
    uniform = ops.neg(ops.mean(logp, axis=-1))
    ce = ops.add(ops.mul(nll, 1.0 - smoothing), ops.mul(uniform, smoothing))
    w = token_mask.astype(default_dtype())
    return ops.mul(ops.sum_(ops.mul(ce, w)), 1.0 / n)


def total_loss(out: DecoderOutput | None, aux_src_logits: Tensor,
               aux_tgt_logits: Tensor, targets: LossTargets,
               cfg: ModelConfig, w_src: float | None = None,
               w_tgt: float | None = None):
    """Compose the weighted multi-task loss.

    Returns (LossBreakdown of floats, scalar graph tensor). Passing
    out=None drops the spectrogram and stop terms, which is how the
    pre-training stage trains only the two phone tasks.
    """
    w_src = cfg.w_src if w_src is None else float(w_src)
    w_tgt = cfg.w_tgt if w_tgt is None else float(w_tgt)
    if min(w_src, w_tgt) < 0:
        raise ContractError("loss weights must be non-negative")

    aux_src = smoothed_cross_entropy(aux_src_logits, targets.src_phones_out,
                                     targets.src_phone_mask,
                                     cfg.label_smoothing)
    aux_tgt = smoothed_cross_entropy(aux_tgt_logits, targets.tgt_phones_out,
                                     targets.tgt_phone_mask,
                                     cfg.label_smoothing)
    parts = [ops.mul(aux_src, w_src), ops.mul(aux_tgt, w_tgt)]

    if out is not None:
        if targets.tgt_mel is None or targets.frame_mask is None \
                or targets.stop_targets is None or targets.step_mask is None:
            raise ContractError("spectrogram loss needs mel/stop targets")
        spec = ops.add(
            masked_l1_l2(out.mel_before, targets.tgt_mel, targets.frame_mask),
            masked_l1_l2(out.mel_after, targets.tgt_mel, targets.frame_mask))
        stop = stop_bce(out.stop_logits, targets.stop_targets,
                        targets.step_mask, cfg.stop_pos_weight)
        parts = [spec, stop] + parts
        total = ops.add(ops.add(ops.add(parts[0], parts[1]), parts[2]),
                        parts[3])
        breakdown = LossBreakdown(float(spec.data), float(stop.data),
                                  float(aux_src.data), float(aux_tgt.data),
                                  float(total.data))
    else:
        total = ops.add(parts[0], parts[1])
        breakdown = LossBreakdown(0.0, 0.0, float(aux_src.data),
                                  float(aux_tgt.data), float(total.data))
    return breakdown, total


def pretrain_loss(aux_src_logits: Tensor, aux_tgt_logits: Tensor,
                  targets: LossTargets, cfg: ModelConfig,
                  w_src: float = 0.5, w_tgt: float = 0.5):
    """Equal-weight phone-task loss used for secondary-data pre-training."""
    return total_loss(None, aux_src_logits, aux_tgt_logits, targets, cfg,
                      w_src=w_src, w_tgt=w_tgt)
