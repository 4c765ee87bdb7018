"""Lexicon-driven phonemization and the phone symbol table."""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import ContractError, VocabError

PAD, BOS, EOS, WB = 0, 1, 2, 3
SPECIALS = ("<pad>", "<bos>", "<eos>", "<wb>")


@dataclass(frozen=True)
class PhoneVocab:
    """Phone symbols to dense ids; first four ids are reserved specials."""

    symbols: tuple

    def __post_init__(self):
        if tuple(self.symbols[:4]) != SPECIALS:
            raise ContractError(f"vocab must start with {SPECIALS}")
        if len(set(self.symbols)) != len(self.symbols):
            raise ContractError("vocab symbols must be unique")

    @classmethod
    def from_phones(cls, phones) -> "PhoneVocab":
        ordered = sorted(set(phones) - set(SPECIALS))
        return cls(SPECIALS + tuple(ordered))

    @classmethod
    def from_lexicon(cls, lexicon: dict) -> "PhoneVocab":
        return cls.from_phones(p for phones in lexicon.values() for p in phones)

    def __len__(self):
        return len(self.symbols)

    def id_of(self, symbol: str) -> int:
        try:
            return self.symbols.index(symbol)
        except ValueError:
            raise VocabError(f"unknown phone symbol {symbol!r}") from None

    def to_ids(self, symbols) -> list:
        index = {s: i for i, s in enumerate(self.symbols)}
        try:
            return [index[s] for s in symbols]
        except KeyError as e:
            raise VocabError(f"unknown phone symbol {e.args[0]!r}") from None

    def to_symbols(self, ids) -> list:
        out = []
        for i in ids:
            if not 0 <= int(i) < len(self.symbols):
                raise VocabError(f"phone id {i} out of range [0, {len(self)})")
            out.append(self.symbols[int(i)])
        return out


def phonemize(text: str, lexicon: dict, vocab: PhoneVocab,
              oov_policy: str = "error") -> list:
    """Map text to phone ids: per-word lexicon entries joined by <wb>.

    oov_policy 'error' raises listing the unknown words; 'skip' drops them.
    """
    if not lexicon:
        raise ContractError("lexicon must be non-empty")
    if oov_policy not in ("error", "skip"):
        raise ContractError(f"unknown oov policy {oov_policy!r}")
    words = text.split()
    oov = [w for w in words if w not in lexicon]
    if oov and oov_policy == "error":
        raise VocabError(f"words not in lexicon: {sorted(set(oov))}")
    ids = []
    for w in words:
        if w not in lexicon:
            continue
        if ids:
            ids.append(WB)
        ids.extend(vocab.to_ids(lexicon[w]))
    return ids
