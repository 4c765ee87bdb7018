"""Corpus plumbing: manifests, phonemization, helpers, filters, mixing."""

from .batching import Batch, batch_by_tokens
from .clients import (CallableClient, ReplayClient, SubprocessClient,
                      TranscriptWriter, request_key)
from .features import (FEAT_OFFSET, FEAT_SCALE, Example, FeatureExtractor,
                       normalized_silence)
from .filters import (CodeSwitchRule, DroppedRecord, EmptyTextRule,
                      MaxDurationRule, SynthesisFailedRule, filter_corpus)
from .mixing import mix_upsample, upsample_factor
from .phonemize import BOS, EOS, PAD, SPECIALS, WB, PhoneVocab, phonemize
from .pipeline import (phonemize_manifest, pseudo_translate,
                       synthesize_targets, transcripts_equal)
from .records import (CorpusManifest, UtteranceRecord, infer_role,
                      read_manifest, write_manifest)
from .toy import (SRC_SR, TGT_SR, TTS_GAIN, ToyBackend, ToySpec, ToyWorld,
                  default_toy_spec, generate_toy_corpus)

__all__ = [
    "BOS", "Batch", "CallableClient", "CodeSwitchRule", "CorpusManifest",
    "DroppedRecord", "EOS", "EmptyTextRule", "Example", "FEAT_OFFSET",
    "FEAT_SCALE", "FeatureExtractor", "MaxDurationRule", "PAD", "PhoneVocab",
    "ReplayClient", "SPECIALS", "SRC_SR", "SubprocessClient",
    "SynthesisFailedRule", "TGT_SR", "TTS_GAIN", "ToyBackend", "ToySpec",
    "ToyWorld", "TranscriptWriter", "UtteranceRecord", "WB",
    "batch_by_tokens", "default_toy_spec", "filter_corpus",
    "generate_toy_corpus", "infer_role", "mix_upsample", "normalized_silence",
    "phonemize", "phonemize_manifest", "pseudo_translate", "read_manifest",
    "request_key", "synthesize_targets", "transcripts_equal",
    "upsample_factor", "write_manifest",
]
