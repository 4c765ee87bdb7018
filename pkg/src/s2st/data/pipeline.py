"""Pseudo-labeling stages: translation, speech synthesis, phonemization."""

from __future__ import annotations

from ..errors import ContractError
from .phonemize import PhoneVocab, phonemize
from .records import CorpusManifest, infer_role


def pseudo_translate(manifest: CorpusManifest, mt_client) -> CorpusManifest:
    """Fill tgt_text from the MT helper; failures are flagged, not fatal.

    Records that already carry a real translation are left untouched so
    the stage cannot clobber primary data if misapplied.
    """
    todo = [r for r in manifest.records if r.tgt_text_origin != "real"]
    requests = [{"id": r.id, "task": "mt", "text": r.src_text} for r in todo]
    responses = mt_client.submit(requests) if requests else {}
    out = []
    for r in manifest.records:
        if r.tgt_text_origin == "real":
            out.append(r.copy_with())
            continue
        res = responses.get(r.id)
        if res is None or not res.get("ok") or "text" not in res:
            reason = (res or {}).get("err", "no response")
            out.append(r.copy_with(failed=f"mt: {reason}"))
        else:
            out.append(r.copy_with(tgt_text=res["text"], tgt_text_origin="pseudo",
                                   failed=""))
    return CorpusManifest(out, manifest.role)


def synthesize_targets(manifest: CorpusManifest, tts_client) -> CorpusManifest:
    """Fill tgt_audio via the TTS helper; already-synthesized records skip.

    Empty translations are flagged without bothering the helper; rerunning
    on a completed manifest is a no-op.
    """
    todo = []
    for r in manifest.records:
        if r.tgt_audio or r.failed:
            continue
        if not r.tgt_text.strip():
            continue  # flagged below
        todo.append(r)
    requests = [{"id": r.id, "task": "tts", "text": r.tgt_text} for r in todo]
    responses = tts_client.submit(requests) if requests else {}
    out = []
    for r in manifest.records:
        if r.tgt_audio or r.failed:
            out.append(r.copy_with())
            continue
        if not r.tgt_text.strip():
            out.append(r.copy_with(failed="tts: empty text"))
            continue
        res = responses.get(r.id)
        if res is None or not res.get("ok") or "audio" not in res:
            reason = (res or {}).get("err", "no response")
            out.append(r.copy_with(failed=f"tts: {reason}"))
        else:
            out.append(r.copy_with(tgt_audio=res["audio"],
                                   tgt_audio_origin="pseudo"))
    return CorpusManifest(out, manifest.role)


def phonemize_manifest(manifest: CorpusManifest, src_lexicon: dict,
                       tgt_lexicon: dict, src_vocab: PhoneVocab,
                       tgt_vocab: PhoneVocab,
                       oov_policy: str = "error") -> CorpusManifest:
    """Fill src_phones/tgt_phones from the lexica; texts stay untouched."""
    out = []
    for r in manifest.records:
        changes = {}
        if not r.src_phones:
            changes["src_phones"] = phonemize(r.src_text, src_lexicon, src_vocab,
                                              oov_policy)
        if not r.tgt_phones and r.tgt_text and not r.failed:
            changes["tgt_phones"] = phonemize(r.tgt_text, tgt_lexicon, tgt_vocab,
                                              oov_policy)
        out.append(r.copy_with(**changes))
    return CorpusManifest(out, manifest.role)


def transcripts_equal(a: CorpusManifest, b: CorpusManifest) -> bool:
    if len(a) != len(b) or a.role != b.role:
        return False
    return all(ra.to_json_line() == rb.to_json_line()
               for ra, rb in zip(a.records, b.records))
