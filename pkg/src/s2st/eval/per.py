"""Phone-sequence edit distance and error rate."""

from __future__ import annotations

from ..errors import ContractError


def levenshtein(ref, hyp) -> int:
    """Minimal edit distance with unit-cost substitution/insertion/deletion."""
    ref, hyp = list(ref), list(hyp)
    if not ref:
        return len(hyp)
    if not hyp:
        return len(ref)
    prev = list(range(len(hyp) + 1))
    for i, r in enumerate(ref, 1):
        cur = [i]
        for j, h in enumerate(hyp, 1):
            cur.append(min(prev[j] + 1,            # deletion
                           cur[j - 1] + 1,         # insertion
                           prev[j - 1] + (r != h)))  # substitution / match
        prev = cur
    return prev[-1]


def phoneme_error_rate(ref, hyp) -> float:
    """Edit distance over reference length; may exceed 1 for long hypotheses."""
    ref = list(ref)
    if not ref:
        raise ContractError("error rate is undefined for an empty reference")
    return levenshtein(ref, hyp) / len(ref)
