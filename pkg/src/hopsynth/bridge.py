"""Bridge-question synthesis: entity identification, complementary retrieval,
sub-question generation, fusion with candidate iteration, then polishing.

Every terminal event (success or stage rejection) consumes one attempt from
the budget, so the ledger reconciles exactly: attempts = successes + sum of
stage rejections. The fine retrieval stage reranks by the linking entity
name while the coarse stage uses the expanded query.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from . import prompts
from .constraints import validate_record
from .corpus import CorpusStore, Document
from .parsing import (
    DecisionSentinel,
    MalformedOutput,
    contains_normalized,
    normalize_entity,
    parse_delimited_tuples,
    parse_sectioned,
)
from .polish import Rejected, polish
from .records import BRIDGE_STAGES, QuestionRecord, RejectionLedger, SubQuestionPair
from .retrieval import MmrParams, SearchEngine


class InvalidBridge:
    def __init__(self, reason: str):
        self.reason = reason


@dataclass
class BridgeExtraction:
    entity_name: str
    entity_type: str
    segment: str
    query: str
    source_doc: str


def extract_bridge(doc: Document, chat) -> BridgeExtraction:
    """Identify the linking entity, its segment and the expanded query.

    Retries once on malformed output; raises MalformedOutput after the retry
    or when the entity violates the title rule.
    """
    prompt = prompts.bridge_extraction_prompt(doc)
    records = None
    for attempt in (1, 2):
        raw = chat.chat(prompt)
        try:
            records = {r.tag: r for r in parse_delimited_tuples(raw)}
            for tag in ("bridge_entity", "relevant_segments", "query"):
                if tag not in records:
                    raise MalformedOutput(f"missing {tag} part")
            break
        except MalformedOutput:
            if attempt == 2:
                raise

    entity_field = records["bridge_entity"].fields
    segment_field = records["relevant_segments"].fields
    query_field = records["query"].fields
    if not entity_field or not entity_field[0].strip():
        raise MalformedOutput("empty entity name")
    if len(segment_field) < 2 or not segment_field[1].strip():
        raise MalformedOutput("empty relevant segment")
    if len(query_field) < 2 or not query_field[1].strip():
        raise MalformedOutput("empty query")

    entity = entity_field[0].strip()
    if normalize_entity(entity) == normalize_entity(doc.title):
        raise MalformedOutput(f"entity equals document title: {entity!r}")
    return BridgeExtraction(
        entity_name=entity,
        entity_type=entity_field[1].strip() if len(entity_field) > 1 else "",
        segment=segment_field[1].strip(),
        query=query_field[1].strip(),
        source_doc=doc.id,
    )


_SUBQ_OUTER = ("ANALYSIS", "SUB-QUESTIONS")
_SUBQ_INNER = (
    "Bridge connection",
    "Document A segments",
    "Document B segments",
    "Reasoning path",
)
_SUBQ_QA = ("Sub-question 1", "Answer 1", "Sub-question 2", "Answer 2")


def generate_subquestions(
    extraction: BridgeExtraction, doc_a: Document, segment_a: str, doc_b: Document, chat
) -> SubQuestionPair | InvalidBridge:
    """Generate the chained sub-question pair, or an InvalidBridge verdict.

    The pair's local invariants are enforced here without trusting the
    provider: answer 1 must match the linking entity and sub-question 2 must
    mention it (both after normalization).
    """
    if doc_b.id == doc_a.id:
        raise ValueError("target document must differ from the source document")
    prompt = prompts.subquestion_prompt(extraction.entity_name, doc_a, segment_a, doc_b)

    parsed = None
    for attempt in (1, 2):
        raw = chat.chat(prompt)
        try:
            outer = parse_sectioned(raw, _SUBQ_OUTER, sentinels=("INVALID_BRIDGE_CONNECTION",))
            if isinstance(outer, DecisionSentinel):
                return InvalidBridge(outer.reason)
            inner = parse_sectioned(outer["ANALYSIS"], _SUBQ_INNER, optional=_SUBQ_INNER)
            qa = parse_sectioned(outer["SUB-QUESTIONS"], _SUBQ_QA)
            parsed = (inner, qa)
            break
        except MalformedOutput as exc:
            if attempt == 2:
                return InvalidBridge(f"malformed sub-question output: {exc}")

    inner, qa = parsed
    pair = SubQuestionPair(
        sq1=qa["Sub-question 1"],
        a1=qa["Answer 1"],
        sq2=qa["Sub-question 2"],
        a2=qa["Answer 2"],
        doc_b_segments=inner.get("Document B segments", ""),
        reasoning_path_note=inner.get("Reasoning path", ""),
    )
    if normalize_entity(pair.a1) != normalize_entity(extraction.entity_name):
        return InvalidBridge(f"answer 1 {pair.a1!r} is not the linking entity")
    if not contains_normalized(pair.sq2, extraction.entity_name):
        return InvalidBridge("sub-question 2 does not mention the linking entity")
    if not pair.a2.strip():
        return InvalidBridge("empty final answer")
    return pair


_FUSION_SECTIONS = ("MULTI-HOP QUESTION", "ANSWER", "REASONING PATH", "SOURCES")


class FusionRejected:
    def __init__(self, reason: str):
        self.reason = reason


def synthesize_multihop(
    extraction: BridgeExtraction,
    pair: SubQuestionPair,
    doc_a: Document,
    doc_b: Document,
    chat,
    record_id: str,
) -> QuestionRecord | FusionRejected:
    """Fuse the pair into one draft record; enforce answer and hiding rules."""
    prompt = prompts.synthesis_prompt(extraction.entity_name, pair)
    parsed = None
    for attempt in (1, 2):
        raw = chat.chat(prompt)
        try:
            sections = parse_sectioned(
                raw, _FUSION_SECTIONS, optional=("SOURCES",), sentinels=("NONE",)
            )
            if isinstance(sections, DecisionSentinel):
                return FusionRejected(sections.reason or "declined fusion")
            parsed = sections
            break
        except MalformedOutput as exc:
            if attempt == 2:
                return FusionRejected(f"malformed fusion output: {exc}")

    question = parsed["MULTI-HOP QUESTION"]
    answer = parsed["ANSWER"]
    if normalize_entity(answer) != normalize_entity(pair.a2):
        return FusionRejected(f"final answer {answer!r} does not match answer 2")
    if contains_normalized(question, extraction.entity_name):
        return FusionRejected("fused question reveals the linking entity")

    record = QuestionRecord(
        id=record_id,
        qtype="bridge",
        question=question,
        answer=answer,
        reasoning_path=parsed["REASONING PATH"],
        sub_parts=pair,
        evidence=[(doc_a.id, extraction.segment), (doc_b.id, pair.doc_b_segments or doc_b.text)],
        hop_count=2,
    )
    record.log("extracted_entity", entity=extraction.entity_name, source_doc=doc_a.id)
    record.log("fused", target_doc=doc_b.id, sources=parsed.get("SOURCES", ""))
    return record


class BridgePipeline:
    def __init__(
        self,
        store: CorpusStore,
        engine: SearchEngine,
        generator,
        polisher,
        reranker,
        params: MmrParams | None = None,
    ):
        self.store = store
        self.engine = engine
        self.generator = generator
        self.polisher = polisher
        self.reranker = reranker
        self.params = params or MmrParams()

    def run(
        self,
        seed: int,
        budget: int,
        target_successes: int | None = None,
        id_prefix: str = "bridge",
    ) -> tuple[list[QuestionRecord], RejectionLedger]:
        """Synthesize until the attempt budget (or success target) is reached."""
        ledger = RejectionLedger(BRIDGE_STAGES)
        records: list[QuestionRecord] = []
        rng = random.Random(seed)
        used_sources: set[str] = set()
        remaining = budget

        while remaining > 0 and (target_successes is None or len(records) < target_successes):
            if len(used_sources) >= len(self.store):
                break
            doc = self.store.sample_documents(1, seed=rng.randrange(2**32), exclude=used_sources)[0]
            used_sources.add(doc.id)
            remaining = self._attempt_source(doc, ledger, records, remaining, id_prefix)
        return records, ledger

    def _attempt_source(
        self,
        doc: Document,
        ledger: RejectionLedger,
        records: list[QuestionRecord],
        remaining: int,
        id_prefix: str,
    ) -> int:
        try:
            extraction = extract_bridge(doc, self.generator)
        except MalformedOutput:
            ledger.reject("extraction_malformed")
            return remaining - 1

        ranked = self.engine.retrieve_complementary(
            extraction.query,
            doc,
            self.params,
            self.reranker,
            rerank_query=extraction.entity_name,
        )
        if not ranked.entries:
            ledger.reject("retrieval_empty")
            return remaining - 1

        trail = [
            {"event": "candidates", "source_doc": doc.id, "ranked": ranked.ids()},
        ]
        for rank, doc_id in enumerate(ranked.ids()):
            if remaining <= 0:
                break
            candidate = self.store.get(doc_id)
            outcome = generate_subquestions(extraction, doc, extraction.segment, candidate, self.generator)
            if isinstance(outcome, InvalidBridge):
                ledger.reject("step3a_subq")
                remaining -= 1
                trail.append({"event": "candidate_rejected", "doc": doc_id, "stage": "step3a", "rank": rank})
                continue

            draft = synthesize_multihop(
                extraction, outcome, doc, candidate, self.generator,
                record_id=f"{id_prefix}-{ledger.attempts:06d}",
            )
            if isinstance(draft, FusionRejected):
                ledger.reject("step3b_fusion")
                remaining -= 1
                trail.append({"event": "candidate_rejected", "doc": doc_id, "stage": "step3b", "rank": rank})
                continue

            draft.provenance = [
                {"seq": i, **{k: v for k, v in ev.items() if k != "seq"}}
                for i, ev in enumerate(trail + draft.provenance)
            ]
            polished = polish(draft, self.polisher)
            remaining -= 1
            if isinstance(polished, Rejected):
                ledger.reject("polisher_reject")
                return remaining
            report = validate_record(polished)
            polished.log("validated", **report.to_dict())
            records.append(polished)
            ledger.success()
            return remaining
        return remaining


def chain_nhop(
    record: QuestionRecord,
    depth: int,
    pipeline: BridgePipeline,
) -> QuestionRecord | Rejected:
    """Recursively extend a bridge record to `depth` hops.

    The latest target document becomes the next source; a hop whose linking
    entity repeats an earlier one is rejected as degenerate. Evidence grows
    by one distinct document per added hop.
    """
    if depth < 2:
        raise ValueError("depth must be at least 2")
    if depth == 2:
        return record

    current = record
    entities = set()
    if isinstance(record.sub_parts, SubQuestionPair):
        entities.add(normalize_entity(record.sub_parts.a1))

    while current.hop_count < depth:
        last_doc_id = current.evidence_doc_ids()[-1]
        last_doc = pipeline.store.get(last_doc_id)
        try:
            extraction = extract_bridge(last_doc, pipeline.generator)
        except MalformedOutput as exc:
            return Rejected(f"chain extraction failed: {exc}")
        if normalize_entity(extraction.entity_name) in entities:
            return Rejected(f"degenerate chain: entity {extraction.entity_name!r} repeats")
        entities.add(normalize_entity(extraction.entity_name))

        ranked = pipeline.engine.retrieve_complementary(
            extraction.query, last_doc, pipeline.params, pipeline.reranker,
            rerank_query=extraction.entity_name,
        )
        seen = set(current.evidence_doc_ids())
        next_ids = [i for i in ranked.ids() if i not in seen]
        if not next_ids:
            return Rejected("chain retrieval found no unused documents")

        extended = None
        for doc_id in next_ids:
            candidate = pipeline.store.get(doc_id)
            pair = generate_subquestions(
                extraction, last_doc, extraction.segment, candidate, pipeline.generator
            )
            if isinstance(pair, InvalidBridge):
                continue
            fused = _fuse_extension(current, extraction, pair, candidate, pipeline.generator)
            if fused is not None:
                extended = fused
                break
        if extended is None:
            return Rejected("no candidate extended the chain")
        current = extended
    return current


def _fuse_extension(
    current: QuestionRecord,
    extraction: BridgeExtraction,
    pair: SubQuestionPair,
    doc_b: Document,
    chat,
) -> QuestionRecord | None:
    prompt = prompts.nhop_fusion_prompt(
        extraction.entity_name, current.question, current.answer, pair
    )
    raw = chat.chat(prompt)
    try:
        sections = parse_sectioned(
            raw, _FUSION_SECTIONS, optional=("SOURCES",), sentinels=("NONE",)
        )
    except MalformedOutput:
        return None
    if isinstance(sections, DecisionSentinel):
        return None
    question, answer = sections["MULTI-HOP QUESTION"], sections["ANSWER"]
    if normalize_entity(answer) != normalize_entity(pair.a2):
        return None
    if contains_normalized(question, extraction.entity_name):
        return None
    extended = QuestionRecord(
        id=f"{current.id}-h{current.hop_count + 1}",
        qtype="bridge",
        question=question,
        answer=answer,
        reasoning_path=sections["REASONING PATH"],
        sub_parts=current.sub_parts,
        evidence=current.evidence + [(doc_b.id, pair.doc_b_segments or doc_b.text)],
        provenance=list(current.provenance),
        hop_count=current.hop_count + 1,
        flags=list(current.flags),
    )
    extended.log("chained", entity=extraction.entity_name, target_doc=doc_b.id)
    return extended
