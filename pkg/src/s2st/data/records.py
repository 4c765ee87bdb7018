"""Corpus records and line-delimited manifest files.

A manifest is UTF-8 JSON objects, one record per line, fields in a fixed
order. Optional fields (everything target-side plus the failure marker)
may be absent until the pipeline stage that fills them runs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from ..errors import ContractError, ParseError

CATEGORIES = ("primary", "secondary")
ORIGIN_VALUES = ("", "real", "pseudo")
ROLES = ("primary", "secondary", "mixed")

_FIELD_ORDER = ("id", "src_audio", "src_sr", "src_text", "src_phones",
                "tgt_text", "tgt_text_origin", "tgt_phones", "tgt_audio",
                "tgt_audio_origin", "category", "failed")


@dataclass
class UtteranceRecord:
    id: str
    src_audio: str
    src_sr: int
    src_text: str
    category: str
    src_phones: list = field(default_factory=list)
    tgt_text: str = ""
    tgt_text_origin: str = ""
    tgt_phones: list = field(default_factory=list)
    tgt_audio: str = ""
    tgt_audio_origin: str = ""
    failed: str = ""

    def __post_init__(self):
        if not self.id:
            raise ContractError("record id must be non-empty")
        if self.category not in CATEGORIES:
            raise ContractError(
                f"record {self.id}: category {self.category!r} not in {CATEGORIES}")
        for name in ("tgt_text_origin", "tgt_audio_origin"):
            if getattr(self, name) not in ORIGIN_VALUES:
                raise ContractError(
                    f"record {self.id}: {name}={getattr(self, name)!r} invalid")
        # primary data carries real translations with synthesized speech;
        # secondary data is pseudo on both sides
        if self.category == "primary" and self.tgt_text_origin == "pseudo":
            raise ContractError(
                f"record {self.id}: primary records need real translations")
        if self.category == "secondary" and "real" in (self.tgt_text_origin,
                                                       self.tgt_audio_origin):
            raise ContractError(
                f"record {self.id}: secondary records must be fully pseudo")
        if self.category == "primary" and self.tgt_audio_origin == "real":
            raise ContractError(
                f"record {self.id}: primary target speech must be synthesized")
        self.src_phones = [int(p) for p in self.src_phones]
        self.tgt_phones = [int(p) for p in self.tgt_phones]

    def copy_with(self, **changes) -> "UtteranceRecord":
        out = replace(self, **changes)
        out.src_phones = list(out.src_phones)
        out.tgt_phones = list(out.tgt_phones)
        return out

    def to_json_line(self) -> str:
        d = {}
        for name in _FIELD_ORDER:
            value = getattr(self, name)
            if name == "failed" and not value:
                continue
            d[name] = value
        return json.dumps(d, ensure_ascii=False, separators=(", ", ": "))


@dataclass
class CorpusManifest:
    records: list
    role: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise ContractError(f"manifest role {self.role!r} not in {ROLES}")
        if self.role in ("primary", "secondary"):
            bad = [r.id for r in self.records if r.category != self.role]
            if bad:
                raise ContractError(
                    f"role={self.role} manifest contains foreign records: "
                    f"{bad[:5]}")
        seen = set()
        for r in self.records:
            if r.id in seen:
                raise ContractError(f"duplicate record id {r.id!r} in manifest")
            seen.add(r.id)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)


def infer_role(records) -> str:
    cats = {r.category for r in records}
    if cats == {"primary"}:
        return "primary"
    if cats == {"secondary"}:
        return "secondary"
    return "mixed"


def write_manifest(manifest: CorpusManifest, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for r in manifest.records:
            fh.write(r.to_json_line() + "\n")


def read_manifest(path, role: str | None = None) -> CorpusManifest:
    """Parse a manifest; the role is inferred from categories unless given."""
    records = []
    seen = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                d = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(f"{path}:{lineno}: malformed record ({e.msg})") from e
            if not isinstance(d, dict):
                raise ParseError(f"{path}:{lineno}: record is not an object")
            unknown = set(d) - set(_FIELD_ORDER)
            if unknown:
                raise ParseError(
                    f"{path}:{lineno}: unknown fields {sorted(unknown)}")
            missing = {"id", "src_audio", "src_sr", "src_text", "category"} - set(d)
            if missing:
                raise ParseError(
                    f"{path}:{lineno}: missing required fields {sorted(missing)}")
            if d["id"] in seen:
                raise ParseError(
                    f"{path}:{lineno}: duplicate id {d['id']!r} "
                    f"(first seen on line {seen[d['id']]})")
            seen[d["id"]] = lineno
            try:
                records.append(UtteranceRecord(**d))
            except ContractError as e:
                raise ParseError(f"{path}:{lineno}: {e}") from e
    return CorpusManifest(records, role if role is not None else infer_role(records))
