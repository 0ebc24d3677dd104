"""Corpus loading: JSON-lines files of texts to be rated."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import PsytextError


class CorpusError(PsytextError):
    """Malformed corpus file; the message names the offending line."""


@dataclass(frozen=True)
class TextRecord:
    """One corpus entry: a unique id, the text, optional metadata."""

    id: str
    text: str
    meta: dict = field(default_factory=dict, compare=False)


def load_corpus(path: str) -> list[TextRecord]:
    """Read a JSON-lines corpus (one object per line, fields id/text/meta).

    Ids must be unique and non-empty. Errors name the 1-based line
    number of the offending entry.
    """
    records: list[TextRecord] = []
    seen: dict[str, int] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            if not isinstance(obj, dict) or "id" not in obj or "text" not in obj:
                raise CorpusError(f"{path}:{lineno}: expected object with 'id' and 'text'")
            tid = str(obj["id"])
            if not tid:
                raise CorpusError(f"{path}:{lineno}: empty text id")
            if tid in seen:
                raise CorpusError(
                    f"{path}:{lineno}: duplicate text_id {tid!r} (first seen on line {seen[tid]})"
                )
            seen[tid] = lineno
            records.append(TextRecord(id=tid, text=str(obj["text"]), meta=obj.get("meta") or {}))
    if not records:
        raise CorpusError(f"{path}: corpus is empty")
    return records


def write_corpus(path: str, records: list[TextRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            obj = {"id": rec.id, "text": rec.text}
            if rec.meta:
                obj["meta"] = rec.meta
            fh.write(json.dumps(obj, sort_keys=True, ensure_ascii=False) + "\n")
