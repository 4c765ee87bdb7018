"""Direct speech-to-speech translation model."""

from .auxiliary import AuxDecoder
from .config import ModelConfig, fisher_config, teden2zh_config, toy_config
from .decoder import (CausalConv1d, DecoderOutput, PostNet, PreNet,
                      SpectrogramDecoder, step_inputs)
from .encoder import (ConvSubsample, Encoder, EncoderStates,
                      subsampled_length)
from .losses import (LossBreakdown, LossTargets, masked_l1_l2, pretrain_loss,
                     smoothed_cross_entropy, stop_bce, total_loss)
from .model import PromptCategory, S2STModel

__all__ = [
    "AuxDecoder", "CausalConv1d", "ConvSubsample", "DecoderOutput", "Encoder",
    "EncoderStates", "LossBreakdown", "LossTargets", "ModelConfig", "PostNet",
    "PreNet", "PromptCategory", "S2STModel", "SpectrogramDecoder",
    "fisher_config", "masked_l1_l2", "pretrain_loss", "smoothed_cross_entropy",
    "step_inputs", "stop_bce", "subsampled_length", "teden2zh_config",
    "total_loss", "toy_config",
]
