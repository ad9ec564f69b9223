"""Evidence-accessibility audit: MAP, Recall@k, NDCG@k and Support F1.

Relevance is binary over each question's golden evidence documents. NDCG
divides by the ideal DCG of the full golden set, which keeps NDCG@k
monotone in k; for k >= |golden| this coincides with the truncated-ideal
convention. Support F1 compares the top-|golden| retrieved ids against
the golden set (cutoff configurable).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

from ..records import QuestionRecord


@dataclass
class RetrievalAudit:
    method_id: str
    map: float = 0.0
    recall_at: dict[int, float] = field(default_factory=dict)
    ndcg_at: dict[int, float] = field(default_factory=dict)
    support_f1: float = 0.0
    n: int = 0
    skipped: int = 0

    def to_dict(self) -> dict:
        return {
            "method_id": self.method_id,
            "map": self.map,
            "recall_at": {str(k): v for k, v in sorted(self.recall_at.items())},
            "ndcg_at": {str(k): v for k, v in sorted(self.ndcg_at.items())},
            "support_f1": self.support_f1,
            "n": self.n,
            "skipped": self.skipped,
        }


def average_precision(ranking: Sequence[str], golden: set[str]) -> float:
    hits = 0
    total = 0.0
    for i, doc_id in enumerate(ranking, start=1):
        if doc_id in golden:
            hits += 1
            total += hits / i
    return total / len(golden)


def recall_at_k(ranking: Sequence[str], golden: set[str], k: int) -> float:
    return len(golden & set(ranking[:k])) / len(golden)


def ndcg_at_k(ranking: Sequence[str], golden: set[str], k: int) -> float:
    dcg = sum(
        1.0 / math.log2(i + 1)
        for i, doc_id in enumerate(ranking[:k], start=1)
        if doc_id in golden
    )
    ideal = sum(1.0 / math.log2(i + 1) for i in range(1, len(golden) + 1))
    return dcg / ideal


def support_f1(ranking: Sequence[str], golden: set[str], cutoff: int | None = None) -> float:
    cutoff = len(golden) if cutoff is None else cutoff
    retrieved = set(ranking[:cutoff])
    overlap = len(retrieved & golden)
    if overlap == 0:
        return 0.0
    precision = overlap / len(retrieved)
    recall = overlap / len(golden)
    return 2 * precision * recall / (precision + recall)


def retrieval_audit(
    dataset: Sequence[QuestionRecord],
    retriever: Callable[[str, int], Sequence[str]],
    ks: Sequence[int] = (5, 10, 20),
    method_id: str = "retriever",
    support_cutoff: int | None = None,
) -> RetrievalAudit:
    """Audit a retriever against each question's golden evidence set.

    `retriever(query, k)` returns ranked doc ids; it is called once per
    question with depth max(ks, |golden|). Questions with an empty golden
    set are skipped and counted.
    """
    audit = RetrievalAudit(method_id=method_id)
    ap_sum = 0.0
    recall_sums = {k: 0.0 for k in ks}
    ndcg_sums = {k: 0.0 for k in ks}
    f1_sum = 0.0

    for record in dataset:
        golden = set(record.evidence_doc_ids())
        if not golden:
            audit.skipped += 1
            continue
        depth = max(max(ks, default=0), len(golden))
        ranking = list(retriever(record.question, depth))
        ap_sum += average_precision(ranking, golden)
        for k in ks:
            recall_sums[k] += recall_at_k(ranking, golden, k)
            ndcg_sums[k] += ndcg_at_k(ranking, golden, k)
        f1_sum += support_f1(ranking, golden, cutoff=support_cutoff)
        audit.n += 1

    if audit.n:
        audit.map = ap_sum / audit.n
        audit.recall_at = {k: recall_sums[k] / audit.n for k in ks}
        audit.ndcg_at = {k: ndcg_sums[k] / audit.n for k in ks}
        audit.support_f1 = f1_sum / audit.n
    return audit
