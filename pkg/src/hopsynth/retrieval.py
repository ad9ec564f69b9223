"""Lexical and dense indexes plus two-stage complementary-document retrieval.

BM25 uses k1=1.2, b=0.75 with the non-negative idf variant
``ln(1 + (N - df + 0.5) / (df + 0.5))`` over lowercased ``\\w+`` tokens.
Dense retrieval is an exact dot-product scan over unit embeddings of
``title + "\\n" + text``. The coarse stage selects diverse candidates with
a greedy three-term marginal-relevance rule; the fine stage re-orders the
selection by cross-encoder scores (stable sort, ties keep coarse order).
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import CorpusStore, Document

BM25_K1 = 1.2
BM25_B = 0.75

_TOKEN_RE = re.compile(r"\w+")


class RetrievalError(Exception):
    pass


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class MmrParams:
    lambda1: float = 0.87
    lambda2: float = 0.03
    lambda3: float = 0.1
    pool_size: int = 50
    k: int = 10

    def __post_init__(self):
        if min(self.lambda1, self.lambda2, self.lambda3) < 0:
            raise ValueError("lambda weights must be non-negative")
        if self.k > self.pool_size:
            raise ValueError("k must not exceed pool_size")


@dataclass
class RankedList:
    query: str
    entries: list[tuple[str, float]] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)

    def __post_init__(self):
        ids = [doc_id for doc_id, _ in self.entries]
        if len(ids) != len(set(ids)):
            raise ValueError("duplicate doc ids in ranked list")

    def ids(self) -> list[str]:
        return [doc_id for doc_id, _ in self.entries]

    def __len__(self) -> int:
        return len(self.entries)


def embedding_text(doc: Document) -> str:
    return f"{doc.title}\n{doc.text}"


class Bm25Index:
    def __init__(self, docs: Sequence[Document], k1: float = BM25_K1, b: float = BM25_B):
        if not docs:
            raise RetrievalError("cannot index an empty store")
        self.k1 = k1
        self.b = b
        self.doc_ids = [d.id for d in docs]
        tokens = [tokenize(f"{d.title} {d.text}") for d in docs]
        self.doc_lens = [len(t) for t in tokens]
        self.avgdl = sum(self.doc_lens) / len(docs)
        self.term_freqs = [Counter(t) for t in tokens]
        self.n_docs = len(docs)
        df: Counter = Counter()
        for tf in self.term_freqs:
            df.update(tf.keys())
        self.idf = {
            t: math.log(1.0 + (self.n_docs - n + 0.5) / (n + 0.5)) for t, n in df.items()
        }

    def __len__(self) -> int:
        return self.n_docs

    def score(self, query: str, doc_index: int) -> float:
        tf = self.term_freqs[doc_index]
        dl = self.doc_lens[doc_index]
        norm = self.k1 * (1 - self.b + self.b * dl / self.avgdl)
        total = 0.0
        for term in tokenize(query):
            f = tf.get(term, 0)
            if f == 0:
                continue
            total += self.idf[term] * f * (self.k1 + 1) / (f + norm)
        return total

    def search(self, query: str, k: int) -> RankedList:
        if k <= 0:
            return RankedList(query=query)
        scored = [(self.doc_ids[i], self.score(query, i)) for i in range(self.n_docs)]
        scored.sort(key=lambda e: (-e[1], e[0]))
        return RankedList(query=query, entries=scored[:k])

    def postings_checksum(self) -> str:
        digest = hashlib.sha256()
        postings: dict[str, list[tuple[str, int]]] = {}
        for i, tf in enumerate(self.term_freqs):
            for term, count in tf.items():
                postings.setdefault(term, []).append((self.doc_ids[i], count))
        for term in sorted(postings):
            digest.update(json.dumps([term, sorted(postings[term])]).encode("utf-8"))
        return digest.hexdigest()


class DenseIndex:
    def __init__(self, doc_ids: Sequence[str], matrix: np.ndarray):
        if len(doc_ids) != matrix.shape[0]:
            raise RetrievalError("id/vector count mismatch")
        self.doc_ids = list(doc_ids)
        self.matrix = matrix
        self._row = {doc_id: i for i, doc_id in enumerate(doc_ids)}

    def __len__(self) -> int:
        return len(self.doc_ids)

    def vector(self, doc_id: str) -> np.ndarray:
        return self.matrix[self._row[doc_id]]

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._row

    def search_vector(self, query_vec: np.ndarray, k: int, exclude: set[str] | None = None) -> RankedList:
        exclude = exclude or set()
        sims = self.matrix @ query_vec
        scored = [
            (doc_id, float(sims[i]))
            for i, doc_id in enumerate(self.doc_ids)
            if doc_id not in exclude
        ]
        scored.sort(key=lambda e: (-e[1], e[0]))
        return RankedList(query="", entries=scored[: max(k, 0)])

    def save(self, directory: str | Path):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        np.savez(directory / "embeddings.npz", matrix=self.matrix)
        (directory / "ids.json").write_text(json.dumps(self.doc_ids), encoding="utf-8")

    @classmethod
    def load(cls, directory: str | Path) -> "DenseIndex":
        directory = Path(directory)
        matrix = np.load(directory / "embeddings.npz")["matrix"]
        doc_ids = json.loads((directory / "ids.json").read_text(encoding="utf-8"))
        return cls(doc_ids, matrix)


class SearchEngine:
    """Built index pair over one corpus store plus the embedding provider."""

    def __init__(
        self,
        store: CorpusStore,
        bm25: Bm25Index,
        dense: DenseIndex,
        embedder,
        embed_failures: list[tuple[str, str]] | None = None,
    ):
        self.store = store
        self.bm25 = bm25
        self.dense = dense
        self.embedder = embedder
        self.embed_failures = list(embed_failures or [])

    def embed_query(self, query: str) -> np.ndarray:
        return self.embedder.embed([query])[0]

    def search_bm25(self, query: str, k: int) -> RankedList:
        return self.bm25.search(query, k)

    def search_dense(self, query: str, k: int, exclude: set[str] | None = None) -> RankedList:
        if k <= 0:
            return RankedList(query=query)
        ranked = self.dense.search_vector(self.embed_query(query), k, exclude=exclude)
        ranked.query = query
        return ranked

    def mmr_select(
        self,
        query: str,
        source_doc: Document | None,
        candidates: Sequence[str],
        params: MmrParams,
    ) -> RankedList:
        return mmr_select(
            query_vec=self.embed_query(query),
            source_vec=self.dense.vector(source_doc.id)
            if source_doc is not None and source_doc.id in self.dense
            else self.embedder.embed([embedding_text(source_doc)])[0]
            if source_doc is not None
            else None,
            candidate_ids=list(candidates),
            candidate_vecs=np.stack([self.dense.vector(c) for c in candidates]),
            params=params,
            query=query,
        )

    def retrieve_complementary(
        self,
        query: str,
        source_doc: Document,
        params: MmrParams,
        reranker,
        rerank_query: str | None = None,
    ) -> RankedList:
        """Coarse dense+MMR selection, then rerank-score reordering.

        The fine stage scores against `rerank_query` when given (pipelines
        may rerank by the bridge entity while retrieving by the expanded
        query); ties keep the coarse order.
        """
        pool = self.search_dense(query, params.pool_size, exclude={source_doc.id})
        if not pool.entries:
            return RankedList(query=query, flags=["empty_pool"])
        coarse = self.mmr_select(query, source_doc, pool.ids(), params)
        docs = [self.store.get(doc_id) for doc_id in coarse.ids()]
        scores = reranker.rerank_batch(rerank_query if rerank_query is not None else query,
                                       [embedding_text(d) for d in docs])
        order = sorted(range(len(docs)), key=lambda i: -scores[i])
        entries = [(docs[i].id, float(scores[i])) for i in order]
        return RankedList(query=query, entries=entries, flags=list(coarse.flags))


def mmr_select(
    query_vec: np.ndarray,
    source_vec: np.ndarray | None,
    candidate_ids: Sequence[str],
    candidate_vecs: np.ndarray,
    params: MmrParams,
    query: str = "",
) -> RankedList:
    """Greedy selection of up to k candidates by the three-term marginal score.

    score(d) = l1*sim(q,d) - l2*sim(d,src) - l3*max_{s in selected} sim(d,s);
    the diversity term is 0 for the first pick. Ties break toward the
    lexicographically smaller doc id. Selection-step scores are attached to
    the output in pick order (they are not guaranteed monotone when
    similarities are negative).
    """
    if len(candidate_ids) == 0:
        raise ValueError("candidates must be non-empty")
    flags = []
    k = params.k
    if k > len(candidate_ids):
        k = len(candidate_ids)
        flags.append("k_truncated_to_candidates")

    rel = candidate_vecs @ query_vec
    src_sim = candidate_vecs @ source_vec if source_vec is not None else np.zeros(len(candidate_ids))
    pair = candidate_vecs @ candidate_vecs.T

    remaining = list(range(len(candidate_ids)))
    selected: list[int] = []
    entries: list[tuple[str, float]] = []
    while remaining and len(selected) < k:
        best_i = None
        best = (-math.inf, "")
        for i in remaining:
            diversity = max(pair[i, j] for j in selected) if selected else 0.0
            score = params.lambda1 * rel[i] - params.lambda2 * src_sim[i] - params.lambda3 * diversity
            # ties prefer the smaller doc id
            if best_i is None or score > best[0] or (score == best[0] and candidate_ids[i] < best[1]):
                best_i = i
                best = (float(score), candidate_ids[i])
        selected.append(best_i)
        remaining.remove(best_i)
        entries.append((candidate_ids[best_i], best[0]))
    return RankedList(query=query, entries=entries, flags=flags)


def build_indexes(
    store: CorpusStore,
    embedder,
    batch_size: int = 32,
    max_failure_ratio: float = 0.01,
) -> SearchEngine:
    """Build BM25 and dense indexes over every document in the store.

    Embedding failures are collected per document; the build refuses to
    finalize when more than `max_failure_ratio` of documents failed.
    """
    docs = list(store.iter_documents())
    if not docs:
        raise RetrievalError("cannot index an empty store")
    bm25 = Bm25Index(docs)

    vectors: dict[str, np.ndarray] = {}
    failures: list[tuple[str, str]] = []
    for start in range(0, len(docs), batch_size):
        batch = docs[start : start + batch_size]
        try:
            matrix = embedder.embed([embedding_text(d) for d in batch])
            for d, row in zip(batch, matrix):
                vectors[d.id] = row
        except Exception:
            for d in batch:  # retry singly to attribute failures
                try:
                    vectors[d.id] = embedder.embed([embedding_text(d)])[0]
                except Exception as exc:
                    failures.append((d.id, str(exc)))
    if failures and len(failures) / len(docs) > max_failure_ratio:
        raise RetrievalError(
            f"embedding failed for {len(failures)}/{len(docs)} documents: "
            + "; ".join(f"{i}: {m}" for i, m in failures[:5])
        )
    ok_ids = [d.id for d in docs if d.id in vectors]
    dense = DenseIndex(ok_ids, np.stack([vectors[i] for i in ok_ids]))
    return SearchEngine(store, bm25, dense, embedder, embed_failures=failures)
