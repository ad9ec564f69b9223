import json
from pathlib import Path

import pytest

from hopsynth.corpus import CorpusStore, ingest


def make_corpus_file(path: Path, docs: list[dict]) -> Path:
    with path.open("w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(json.dumps(doc) + "\n")
    return path


@pytest.fixture
def small_store(tmp_path) -> CorpusStore:
    docs = [
        {"id": "doc-a", "title": "Alpha Station", "text": "the quick brown fox jumps over zephyr"},
        {"id": "doc-b", "title": "Beta Harbor", "text": "a slow green turtle sleeps near zephyr"},
        {"id": "doc-c", "title": "Gamma Ridge", "text": "mountains rise over the quiet village"},
    ]
    source = make_corpus_file(tmp_path / "docs.jsonl", docs)
    ingest(source, tmp_path / "store")
    return CorpusStore(tmp_path / "store")
