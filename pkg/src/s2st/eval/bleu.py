"""Corpus BLEU-4 with brevity penalty and add-one smoothing.

Tokenization is selected by mode: lowercased whitespace words, individual
non-space characters, or whitespace-separated phone symbols. Counts are
pooled over all segments before precisions are formed, so segment order
cannot change the score. Zero counts for orders >= 2 are smoothed
add-one, which short segments need to score above zero at all; unigram
precision is never smoothed, so hypotheses sharing no unigram with their
references still score exactly 0.
"""

from __future__ import annotations

import math
from collections import Counter

from ..errors import ContractError

MODES = ("word_ci_detok", "char", "phone")
MAX_ORDER = 4


def tokenize(text: str, mode: str) -> list:
    if mode == "word_ci_detok":
        return text.lower().split()
    if mode == "char":
        return [c for c in text if not c.isspace()]
    if mode == "phone":
        return text.split()
    raise ContractError(f"mode {mode!r} not in {MODES}")


def _ngrams(tokens: list, n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu(hyps, refs, mode: str = "word_ci_detok") -> float:
    """Corpus BLEU-4 in [0, 100] over paired hypothesis/reference texts."""
    hyps, refs = list(hyps), list(refs)
    if len(hyps) != len(refs):
        raise ContractError(
            f"hypothesis/reference counts differ: {len(hyps)} vs {len(refs)}")
    if not hyps:
        raise ContractError("BLEU needs at least one segment")
    clipped = [0] * MAX_ORDER
    totals = [0] * MAX_ORDER
    hyp_len = ref_len = 0
    for hyp_text, ref_text in zip(hyps, refs):
        h = tokenize(hyp_text, mode)
        r = tokenize(ref_text, mode)
        hyp_len += len(h)
        ref_len += len(r)
        for n in range(1, MAX_ORDER + 1):
            counts = _ngrams(h, n)
            ref_counts = _ngrams(r, n)
            totals[n - 1] += max(len(h) - n + 1, 0)
            clipped[n - 1] += sum(min(c, ref_counts[g])
                                  for g, c in counts.items())
    if hyp_len == 0 or clipped[0] == 0:
        return 0.0
    log_sum = 0.0
    for n in range(1, MAX_ORDER + 1):
        c, t = clipped[n - 1], totals[n - 1]
        if n >= 2 and c == 0:
            c, t = c + 1, t + 1
        log_sum += math.log(c / t)
    bp = 1.0 if hyp_len >= ref_len else math.exp(1.0 - ref_len / hyp_len)
    return 100.0 * bp * math.exp(log_sum / MAX_ORDER)
