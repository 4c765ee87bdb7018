"""Objective evaluation: phone decoding, PER, BLEU, reports."""

from .bleu import MODES, bleu, tokenize
from .decoding import (DecodeConfig, decode_phonemes, length_penalty,
                       next_token_logprobs, sequence_logprob)
from .per import levenshtein, phoneme_error_rate
from .report import (AsrBleuResult, EvalReport, UtteranceEval, asr_bleu,
                     evaluate, format_table, phones_text, report_as_dict,
                     write_report)

__all__ = [
    "AsrBleuResult", "DecodeConfig", "EvalReport", "MODES", "UtteranceEval",
    "asr_bleu", "bleu", "decode_phonemes", "evaluate", "format_table",
    "length_penalty", "levenshtein", "next_token_logprobs",
    "phoneme_error_rate", "phones_text", "report_as_dict", "sequence_logprob",
    "tokenize", "write_report",
]
