"""Document store: ingest, filter, persist, sample and serve corpus documents.

Storage layout (one directory per store):
    docs.log   append-only JSONL, one document per line
    docs.idx   JSON map doc id -> byte offset into docs.log
    manifest   JSON ingestion manifest (counts + content checksum)
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field
from pathlib import Path

MAX_WORDS = 4096


class CorpusError(Exception):
    pass


class DuplicateIdError(CorpusError):
    pass


class NotFoundError(CorpusError):
    pass


def word_count(text: str) -> int:
    """Whitespace-token count (split on Unicode whitespace)."""
    return len(text.split())


@dataclass(frozen=True)
class Document:
    id: str
    title: str
    text: str
    word_count: int

    @classmethod
    def from_fields(cls, id: str, title: str, text: str) -> "Document":
        return cls(id=id, title=title, text=text, word_count=word_count(text))


@dataclass
class CorpusManifest:
    source_path: str
    total_read: int
    total_kept: int
    total_dropped_oversize: int
    checksum: str
    malformed: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "source_path": self.source_path,
            "total_read": self.total_read,
            "total_kept": self.total_kept,
            "total_dropped_oversize": self.total_dropped_oversize,
            "checksum": self.checksum,
            "malformed": self.malformed,
        }


def ingest(source: str | Path, store_path: str | Path, max_words: int = MAX_WORDS) -> CorpusManifest:
    """Ingest newline-delimited document records into a store directory.

    Each input line is a JSON object with at least `id`, `title`, `text`.
    Documents longer than `max_words` whitespace tokens are dropped.
    Malformed lines are collected on the manifest; duplicate ids abort.
    """
    source = Path(source)
    store = Path(store_path)
    store.mkdir(parents=True, exist_ok=True)

    kept: list[Document] = []
    seen: set[str] = set()
    malformed: list[str] = []
    total_read = 0
    dropped = 0

    with source.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                doc = Document.from_fields(str(rec["id"]), str(rec["title"]), str(rec["text"]))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                malformed.append(f"line {lineno}: {exc}")
                continue
            total_read += 1
            if doc.id in seen:
                raise DuplicateIdError(f"duplicate document id {doc.id!r} at line {lineno}")
            seen.add(doc.id)
            if doc.word_count > max_words:
                dropped += 1
                continue
            kept.append(doc)

    digest = hashlib.sha256()
    offsets: dict[str, int] = {}
    with (store / "docs.log").open("wb") as log:
        for doc in kept:
            offsets[doc.id] = log.tell()
            payload = json.dumps(
                {"id": doc.id, "title": doc.title, "text": doc.text, "word_count": doc.word_count},
                ensure_ascii=False,
                sort_keys=True,
            ).encode("utf-8")
            log.write(payload + b"\n")
            digest.update(payload)

    (store / "docs.idx").write_text(json.dumps(offsets, sort_keys=True), encoding="utf-8")
    manifest = CorpusManifest(
        source_path=str(source),
        total_read=total_read,
        total_kept=len(kept),
        total_dropped_oversize=dropped,
        checksum=digest.hexdigest(),
        malformed=malformed,
    )
    (store / "manifest").write_text(json.dumps(manifest.to_dict(), indent=2), encoding="utf-8")
    return manifest


class CorpusStore:
    """Read-only view over an ingested store; safe for concurrent readers."""

    def __init__(self, store_path: str | Path):
        self.path = Path(store_path)
        idx_file = self.path / "docs.idx"
        if not idx_file.exists():
            raise CorpusError(f"no store at {self.path}")
        self._offsets: dict[str, int] = json.loads(idx_file.read_text(encoding="utf-8"))
        self._log = self.path / "docs.log"

    def __len__(self) -> int:
        return len(self._offsets)

    def ids(self) -> list[str]:
        return sorted(self._offsets)

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._offsets

    def get(self, doc_id: str) -> Document:
        if doc_id not in self._offsets:
            raise NotFoundError(f"unknown document id {doc_id!r}")
        with self._log.open("rb") as fh:
            fh.seek(self._offsets[doc_id])
            rec = json.loads(fh.readline().decode("utf-8"))
        return Document(rec["id"], rec["title"], rec["text"], rec["word_count"])

    def iter_documents(self):
        for doc_id in self.ids():
            yield self.get(doc_id)

    def manifest(self) -> CorpusManifest:
        data = json.loads((self.path / "manifest").read_text(encoding="utf-8"))
        return CorpusManifest(**data)

    def sample_documents(self, n: int, seed: int, exclude: set[str] | None = None) -> list[Document]:
        """Deterministic sample of n distinct documents not in `exclude`."""
        exclude = exclude or set()
        pool = [i for i in self.ids() if i not in exclude]
        if n > len(pool):
            raise CorpusError(f"requested {n} documents but only {len(pool)} available")
        rng = random.Random(seed)
        return [self.get(i) for i in rng.sample(pool, n)]
