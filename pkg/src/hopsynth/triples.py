"""Simulated-feedback contrastive groups for reranker training.

Coarse-retrieved candidates each attempt sub-question generation and
fusion; the first success labels the positive, every failure a negative.
Groups lacking either class are discarded. The export format (one JSON
object per line: query, pos text, negs texts) is the boundary consumed by
the trainer; `listwise_loss` documents the shared scoring contract.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .bridge import (
    FusionRejected,
    InvalidBridge,
    extract_bridge,
    generate_subquestions,
    synthesize_multihop,
)
from .corpus import CorpusStore
from .parsing import MalformedOutput
from .retrieval import MmrParams, SearchEngine


@dataclass
class ContrastiveGroup:
    query: str  # the linking entity string
    positive: str
    negatives: list[str]
    outcome_notes: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.positive in self.negatives:
            raise ValueError("positive doc must not appear among negatives")
        if not self.negatives:
            raise ValueError("a group needs at least one negative")


def listwise_loss(pos_score: float, all_scores: Sequence[float]) -> float:
    """Negative log-softmax of the positive's score within its group.

    This is the per-group term of the trainer's objective; with all k
    scores equal it evaluates to ln k.
    """
    m = max(all_scores)
    denom = sum(math.exp(s - m) for s in all_scores)
    return -(pos_score - m - math.log(denom))


def forge(
    store: CorpusStore,
    engine: SearchEngine,
    generator,
    seed: int,
    budget: int,
    params: MmrParams | None = None,
) -> list[ContrastiveGroup]:
    """Simulate bridge construction over coarse candidates; label outcomes.

    `budget` counts simulated source documents. Candidates come from the
    coarse stage only (dense retrieval + diversity selection, no reranker,
    since the output trains the reranker).
    """
    params = params or MmrParams()
    rng = random.Random(seed)
    used: set[str] = set()
    groups: list[ContrastiveGroup] = []

    for _ in range(budget):
        if len(used) >= len(store):
            break
        doc = store.sample_documents(1, seed=rng.randrange(2**32), exclude=used)[0]
        used.add(doc.id)
        try:
            extraction = extract_bridge(doc, generator)
        except MalformedOutput:
            continue
        pool = engine.search_dense(extraction.query, params.pool_size, exclude={doc.id})
        if not pool.entries:
            continue
        coarse = engine.mmr_select(extraction.query, doc, pool.ids(), params)

        positive = None
        negatives: list[str] = []
        notes: dict[str, str] = {}
        for doc_id in coarse.ids():
            candidate = store.get(doc_id)
            pair = generate_subquestions(extraction, doc, extraction.segment, candidate, generator)
            if isinstance(pair, InvalidBridge):
                negatives.append(doc_id)
                notes[doc_id] = f"subq: {pair.reason}"
                continue
            draft = synthesize_multihop(
                extraction, pair, doc, candidate, generator, record_id=f"sim-{doc.id}-{doc_id}"
            )
            if isinstance(draft, FusionRejected):
                negatives.append(doc_id)
                notes[doc_id] = f"fusion: {draft.reason}"
                continue
            if positive is None:
                positive = doc_id
                notes[doc_id] = "success"
            # later successes are neither positives nor negatives
        if positive is None or not negatives:
            continue
        groups.append(
            ContrastiveGroup(
                query=extraction.entity_name,
                positive=positive,
                negatives=negatives,
                outcome_notes=notes,
            )
        )
    return groups


def export_groups(groups: Sequence[ContrastiveGroup], store: CorpusStore, path: str | Path) -> dict:
    """Write groups as JSONL with doc texts resolved from the store."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    negatives = 0
    with path.open("w", encoding="utf-8") as fh:
        for group in groups:
            pos_doc = store.get(group.positive)  # unresolvable id raises
            neg_docs = [store.get(n) for n in group.negatives]
            negatives += len(neg_docs)
            fh.write(
                json.dumps(
                    {
                        "query": group.query,
                        "pos": f"{pos_doc.title}\n{pos_doc.text}",
                        "negs": [f"{d.title}\n{d.text}" for d in neg_docs],
                    },
                    ensure_ascii=False,
                    sort_keys=True,
                )
                + "\n"
            )
    manifest = {"groups": len(groups), "negatives": negatives, "path": str(path)}
    return manifest


def read_groups(path: str | Path) -> list[dict]:
    """Read back exported group records (query, pos, negs)."""
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            out.append(json.loads(line))
    return out
