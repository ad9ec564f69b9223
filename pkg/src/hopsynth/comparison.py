"""Comparison-question synthesis: entity/attribute extraction, concreteness
and comparability gating, dual-path query planning, construction, polishing.

One attempt = one source document carried to a terminal event
(success or rejection at extraction/filter/retrieval/construction/polish),
so ledger conservation mirrors the bridge pipeline at source granularity.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from . import prompts
from .constraints import validate_record
from .corpus import CorpusStore, Document
from .parsing import MalformedOutput, normalize_entity, parse_delimited_tuples, parse_sectioned
from .polish import Rejected, polish
from .records import COMPARISON_STAGES, ComparisonCore, QuestionRecord, RejectionLedger
from .retrieval import SearchEngine


@dataclass
class EntityProfile:
    name: str
    etype: str
    attributes: list[tuple[str, str, str]]  # (name, value, entity_b_query)
    concreteness: int = 0
    comparability: dict[str, int] = field(default_factory=dict)
    source_doc: str = ""


@dataclass
class QueryPlan:
    path: str  # recall_focused_verify | search_queries
    queries: list[str]
    entity_b_hint: str | None = None
    attribute_hint: str | None = None

    def __post_init__(self):
        if self.path == "recall_focused_verify":
            if len(self.queries) != 1 or not (self.entity_b_hint and self.attribute_hint):
                raise MalformedOutput("recall path requires one query and both hints")
        elif self.path == "search_queries":
            if len(self.queries) != 3 or self.entity_b_hint or self.attribute_hint:
                raise MalformedOutput("search path requires exactly three queries and no hints")
        else:
            raise MalformedOutput(f"unknown query plan path {self.path!r}")


class ProfileRejected:
    def __init__(self, reason: str):
        self.reason = reason


def extract_profile(doc: Document, chat) -> EntityProfile:
    """Parse the subject entity and its attribute tuples; retry once."""
    prompt = prompts.compare_extraction_prompt(doc)
    records = None
    for attempt in (1, 2):
        raw = chat.chat(prompt)
        try:
            records = parse_delimited_tuples(raw)
            break
        except MalformedOutput:
            if attempt == 2:
                raise

    subject = next((r for r in records if r.tag == "subject_entity"), None)
    if subject is None or not subject.fields or not subject.fields[0].strip():
        raise MalformedOutput("missing subject_entity part")
    attributes = []
    for rec in records:
        if rec.tag != "attribute":
            continue
        name = rec.fields[0].strip() if len(rec.fields) > 0 else ""
        value = rec.fields[1].strip() if len(rec.fields) > 1 else ""
        query = rec.fields[2].strip() if len(rec.fields) > 2 else ""
        if name and value:  # attributes with empty values are dropped
            attributes.append((name, value, query))
    return EntityProfile(
        name=subject.fields[0].strip(),
        etype=subject.fields[1].strip() if len(subject.fields) > 1 else "",
        attributes=attributes,
        source_doc=doc.id,
    )


def score_and_filter(
    profile: EntityProfile, chat, min_entity: int = 5, min_attr: int = 4
) -> EntityProfile | ProfileRejected:
    """Score concreteness/comparability and drop what misses the thresholds.

    Attributes are matched to their score tuples by name (and value when
    present); unscored attributes are dropped as unverified.
    """
    prompt = prompts.compare_filter_prompt(profile.name, profile.etype, profile.attributes)
    records = None
    for attempt in (1, 2):
        raw = chat.chat(prompt)
        try:
            records = parse_delimited_tuples(raw)
            break
        except MalformedOutput:
            if attempt == 2:
                raise

    entity_score = None
    attr_scores: dict[str, int] = {}
    for rec in records:
        if rec.tag == "entity_score":
            entity_score = _parse_score(rec.fields[0] if rec.fields else "")
        elif rec.tag == "attribute_score":
            if len(rec.fields) < 3:
                raise MalformedOutput("attribute_score needs name, value and score")
            attr_scores[normalize_entity(rec.fields[0])] = _parse_score(rec.fields[2])
    if entity_score is None:
        raise MalformedOutput("missing entity_score part")

    if entity_score < min_entity:
        return ProfileRejected(f"concreteness {entity_score} below threshold {min_entity}")

    kept = []
    comparability = {}
    for name, value, query in profile.attributes:
        score = attr_scores.get(normalize_entity(name))
        if score is None or score < min_attr:
            continue
        kept.append((name, value, query))
        comparability[name] = score
    if not kept:
        return ProfileRejected("no attribute met the comparability threshold")
    return EntityProfile(
        name=profile.name,
        etype=profile.etype,
        attributes=kept,
        concreteness=entity_score,
        comparability=comparability,
        source_doc=profile.source_doc,
    )


def _parse_score(raw: str) -> int:
    try:
        score = int(raw.strip())
    except ValueError:
        raise MalformedOutput(f"score is not an integer: {raw!r}")
    if not 1 <= score <= 5:
        raise MalformedOutput(f"score out of range 1-5: {score}")
    return score


def plan_queries(profile: EntityProfile, chat) -> QueryPlan:
    """Parse the single chosen retrieval path; both-or-neither is malformed."""
    prompt = prompts.compare_query_plan_prompt(profile.name, profile.etype, profile.attributes)
    records = None
    for attempt in (1, 2):
        raw = chat.chat(prompt)
        try:
            records = parse_delimited_tuples(raw)
            break
        except MalformedOutput:
            if attempt == 2:
                raise

    paths = [r for r in records if r.tag in ("recall_focused_verify", "search_queries")]
    if len(paths) != 1:
        raise MalformedOutput(f"expected exactly one path record, got {len(paths)}")
    rec = paths[0]
    if rec.tag == "recall_focused_verify":
        if len(rec.fields) != 3:
            raise MalformedOutput("recall path needs entity, attribute and query")
        return QueryPlan(
            path="recall_focused_verify",
            queries=[rec.fields[2]],
            entity_b_hint=rec.fields[0],
            attribute_hint=rec.fields[1],
        )
    if len(rec.fields) != 3:
        raise MalformedOutput("search path needs exactly three queries")
    return QueryPlan(path="search_queries", queries=list(rec.fields))


def retrieve_candidates(
    plan: QueryPlan, engine: SearchEngine, k: int, exclude: set[str] | None = None
) -> list[Document]:
    """Top-k for the recall query, or the deduped union of per-query top-k.

    Union order is by best rank across queries with doc-id tie-break; the
    source document is always excluded.
    """
    exclude = exclude or set()
    best_rank: dict[str, int] = {}
    for query in plan.queries:
        ranked = engine.search_dense(query, k, exclude=exclude)
        for rank, doc_id in enumerate(ranked.ids()):
            if doc_id not in best_rank or rank < best_rank[doc_id]:
                best_rank[doc_id] = rank
    ordered = sorted(best_rank, key=lambda d: (best_rank[d], d))
    return [engine.store.get(d) for d in ordered]


_BUILDER_KEYS = (
    "entity_a",
    "entity_b",
    "attribute_compared",
    "value_a",
    "value_b",
    "multi_hop_question",
    "answer",
    "fact_entity_a",
    "fact_entity_b",
    "relevant_paragraph_a",
    "relevant_paragraph_b",
)
_BUILDER_OPTIONAL = ("entity_a", "value_a", "value_b")


class BuildFailed:
    def __init__(self, reason: str):
        self.reason = reason


def build_comparison(
    profile: EntityProfile,
    candidate: Document,
    plan: QueryPlan,
    doc_a: Document,
    chat,
    record_id: str,
) -> tuple[ComparisonCore, QuestionRecord] | BuildFailed:
    """Ask the builder for one comparable pair over (doc_a, candidate)."""
    if candidate.id == doc_a.id:
        raise ValueError("candidate must differ from the source document")
    guided = plan.path == "recall_focused_verify"
    prompt = prompts.compare_builder_prompt(
        profile.name,
        profile.etype,
        profile.attributes,
        doc_a,
        candidate,
        hint_entity=plan.entity_b_hint if guided else None,
        hint_attribute=plan.attribute_hint if guided else None,
    )
    raw = chat.chat(prompt)
    first_line = next((l.strip() for l in raw.splitlines() if l.strip()), "")
    if first_line == "FAIL":
        return BuildFailed("builder found no comparable pair")
    if first_line != "PASS":
        return BuildFailed("builder output missing PASS marker")
    try:
        sections = parse_sectioned(raw, ("PASS",) + _BUILDER_KEYS, optional=("PASS",) + _BUILDER_OPTIONAL)
    except MalformedOutput as exc:
        return BuildFailed(f"malformed builder output: {exc}")

    attribute = sections["attribute_compared"]
    attr_names = {normalize_entity(n) for n, _, _ in profile.attributes}
    if normalize_entity(attribute) not in attr_names:
        return BuildFailed(f"attribute {attribute!r} is not in the filtered profile")
    if guided:
        if normalize_entity(attribute) != normalize_entity(plan.attribute_hint):
            return BuildFailed(f"guided mode requires attribute {plan.attribute_hint!r}")
        if normalize_entity(sections["entity_b"]) != normalize_entity(plan.entity_b_hint):
            return BuildFailed(f"guided mode requires entity {plan.entity_b_hint!r}")

    fact_a, para_a = sections["fact_entity_a"], sections["relevant_paragraph_a"]
    fact_b, para_b = sections["fact_entity_b"], sections["relevant_paragraph_b"]
    if fact_a not in para_a:
        return BuildFailed("fact_entity_a is not a substring of its paragraph")
    if fact_b not in para_b:
        return BuildFailed("fact_entity_b is not a substring of its paragraph")

    profile_value = next(
        (v for n, v, _ in profile.attributes if normalize_entity(n) == normalize_entity(attribute)),
        "",
    )
    core = ComparisonCore(
        entity_a=sections.get("entity_a") or profile.name,
        entity_b=sections["entity_b"],
        attribute=attribute,
        value_a=sections.get("value_a") or profile_value,
        value_b=sections.get("value_b") or "",
        fact_a=fact_a,
        fact_b=fact_b,
        paragraph_a=para_a,
        paragraph_b=para_b,
        doc_a=doc_a.id,
        doc_b=candidate.id,
    )
    record = QuestionRecord(
        id=record_id,
        qtype="comparison",
        question=sections["multi_hop_question"],
        answer=sections["answer"],
        reasoning_path=(
            f"Compare {core.attribute} of {core.entity_a} ({core.doc_a}) "
            f"and {core.entity_b} ({core.doc_b})."
        ),
        sub_parts=core,
        evidence=[(core.doc_a, para_a), (core.doc_b, para_b)],
        hop_count=2,
    )
    record.log("compared", entity_a=core.entity_a, entity_b=core.entity_b, attribute=core.attribute)
    return core, record


class ComparisonPipeline:
    def __init__(
        self,
        store: CorpusStore,
        engine: SearchEngine,
        generator,
        filter_chat,
        polisher,
        min_entity: int = 5,
        min_attr: int = 4,
        per_query_k: int = 5,
    ):
        self.store = store
        self.engine = engine
        self.generator = generator
        self.filter_chat = filter_chat
        self.polisher = polisher
        self.min_entity = min_entity
        self.min_attr = min_attr
        self.per_query_k = per_query_k

    def run(
        self,
        seed: int,
        budget: int,
        target_successes: int | None = None,
        id_prefix: str = "comparison",
    ) -> tuple[list[QuestionRecord], RejectionLedger]:
        ledger = RejectionLedger(COMPARISON_STAGES)
        records: list[QuestionRecord] = []
        rng = random.Random(seed)
        used: set[str] = set()

        while ledger.attempts < budget and (
            target_successes is None or len(records) < target_successes
        ):
            if len(used) >= len(self.store):
                break
            doc = self.store.sample_documents(1, seed=rng.randrange(2**32), exclude=used)[0]
            used.add(doc.id)
            self._attempt_source(doc, ledger, records, id_prefix)
        return records, ledger

    def _attempt_source(
        self, doc: Document, ledger: RejectionLedger, records: list[QuestionRecord], id_prefix: str
    ):
        try:
            profile = extract_profile(doc, self.generator)
            if not profile.attributes:
                ledger.reject("extraction_malformed")
                return
        except MalformedOutput:
            ledger.reject("extraction_malformed")
            return

        try:
            filtered = score_and_filter(profile, self.filter_chat, self.min_entity, self.min_attr)
        except MalformedOutput:
            ledger.reject("filter")
            return
        if isinstance(filtered, ProfileRejected):
            ledger.reject("filter")
            return

        try:
            plan = plan_queries(filtered, self.generator)
        except MalformedOutput:
            ledger.reject("construction")
            return

        candidates = retrieve_candidates(plan, self.engine, self.per_query_k, exclude={doc.id})
        if not candidates:
            ledger.reject("retrieval_empty")
            return

        built = None
        for candidate in candidates:
            result = build_comparison(
                filtered, candidate, plan, doc, self.generator,
                record_id=f"{id_prefix}-{ledger.attempts:06d}",
            )
            if not isinstance(result, BuildFailed):
                built = result
                break
        if built is None:
            ledger.reject("construction")
            return

        _, draft = built
        polished = polish(draft, self.polisher)
        if isinstance(polished, Rejected):
            ledger.reject("polisher_reject")
            return
        report = validate_record(polished)
        polished.log("validated", **report.to_dict())
        records.append(polished)
        ledger.success()
