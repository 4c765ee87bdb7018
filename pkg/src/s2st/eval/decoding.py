"""Autoregressive phone decoding: greedy and small-beam search."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..data.phonemize import BOS, EOS
from ..errors import ConfigError, ContractError
from ..model.encoder import EncoderStates
from ..model.model import S2STModel
from ..nd.tensor import no_grad


@dataclass
class DecodeConfig:
    mode: str = "greedy"
    beam_size: int = 1
    max_len: int = 50
    length_penalty: float = 0.6

    def __post_init__(self):
        if self.mode not in ("greedy", "beam"):
            raise ConfigError(f"mode {self.mode!r} not greedy/beam")
        if self.beam_size < 1:
            raise ConfigError(f"beam_size must be >= 1, got {self.beam_size}")
        if self.mode == "greedy" and self.beam_size != 1:
            raise ConfigError("greedy decoding is exactly beam_size 1")
        if self.max_len < 1:
            raise ConfigError(f"max_len must be >= 1, got {self.max_len}")
        if self.length_penalty < 0:
            raise ConfigError("length_penalty must be >= 0")


def length_penalty(n_tokens: int, alpha: float) -> float:
    """((5 + L) / 6)^alpha; grows with length so longer finished
    hypotheses are not unfairly dominated by short ones."""
    return ((5.0 + n_tokens) / 6.0) ** alpha


def _log_softmax(row: np.ndarray) -> np.ndarray:
    m = row.max()
    return row - (np.log(np.exp(row - m).sum()) + m)


def next_token_logprobs(model: S2STModel, enc: EncoderStates, which: str,
                        tokens: list) -> np.ndarray:
    """Distribution over the next token after BOS + tokens, as log probs."""
    ids = np.asarray([[BOS] + list(tokens)], dtype=np.int64)
    mask = np.ones(ids.shape, dtype=bool)
    with no_grad():
        logits = model.decode_auxiliary_teacher_forced(enc, which, ids, mask)
    return _log_softmax(logits.data[0, -1].astype(np.float64))


def sequence_logprob(model: S2STModel, enc: EncoderStates, which: str,
                     tokens: list, finished: bool) -> float:
    """Joint log prob of a token sequence, plus EOS when finished.

    One teacher-forced pass scores every position at once; this is the
    reference scorer that search results are compared against.
    """
    ids = np.asarray([[BOS] + list(tokens)], dtype=np.int64)
    mask = np.ones(ids.shape, dtype=bool)
    with no_grad():
        logits = model.decode_auxiliary_teacher_forced(enc, which, ids, mask)
    rows = logits.data[0].astype(np.float64)
    total = 0.0
    for pos, tok in enumerate(tokens):
        total += _log_softmax(rows[pos])[int(tok)]
    if finished:
        total += _log_softmax(rows[len(tokens)])[EOS]
    return total


def _check_single(enc: EncoderStates) -> None:
    if enc.memory.shape[0] != 1:
        raise ContractError(
            f"decoding works on one utterance at a time, got batch "
            f"{enc.memory.shape[0]}")


def _greedy(model, enc, which, cfg: DecodeConfig) -> list:
    tokens = []
    for _ in range(cfg.max_len):
        lp = next_token_logprobs(model, enc, which, tokens)
        nxt = int(np.argmax(lp))
        if nxt == EOS:
            break
        tokens.append(nxt)
    return tokens


def _beam(model, enc, which, cfg: DecodeConfig) -> list:
    alive = [(0.0, [])]          # (cumulative log prob, tokens)
    finished = []                # (penalized, tokens)
    for _ in range(cfg.max_len):
        candidates = []
        for score, toks in alive:
            lp = next_token_logprobs(model, enc, which, toks)
            for v in range(len(lp)):
                candidates.append((score + lp[v], toks, v))
        candidates.sort(key=lambda c: -c[0])
        alive = []
        for score, toks, v in candidates[:cfg.beam_size]:
            if v == EOS:
                pen = score / length_penalty(len(toks), cfg.length_penalty)
                finished.append((pen, list(toks)))
            else:
                alive.append((score, toks + [v]))
        if not alive:
            break
    for score, toks in alive:    # ran out of steps without EOS
        pen = score / length_penalty(len(toks), cfg.length_penalty)
        finished.append((pen, toks))
    return max(finished, key=lambda f: f[0])[1]


def decode_phonemes(model: S2STModel, enc: EncoderStates, which: str,
                    cfg: DecodeConfig | None = None) -> list:
    """Decode one utterance's phone ids (no BOS/EOS) from a tapped layer."""
    cfg = cfg or DecodeConfig()
    _check_single(enc)
    if cfg.mode == "greedy":
        return _greedy(model, enc, which, cfg)
    return _beam(model, enc, which, cfg)
