"""Structural validity checks over emitted question records.

A reasoning path is optionally materialized as chained triples; when the
path text follows the documented line grammar
``head -> relation -> tail [doc: ID]`` the full chain checks run, otherwise
only record-level checks apply (triples are never fabricated).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .parsing import contains_normalized, normalize_entity
from .records import ComparisonCore, QuestionRecord, SubQuestionPair

_TRIPLE_RE = re.compile(
    r"^\s*(?:[-*\d.)\s]*)?(?P<head>[^>\[\]]+?)\s*->\s*(?P<rel>[^>\[\]]+?)\s*->\s*(?P<tail>[^>\[\]]+?)\s*\[doc:\s*(?P<doc>[^\]]+)\]\s*$"
)


class ConstraintError(Exception):
    pass


@dataclass(frozen=True)
class Triple:
    head: str
    relation: str
    tail: str
    doc_id: str

    def __post_init__(self):
        if not all((self.head, self.relation, self.tail, self.doc_id)):
            raise ConstraintError("triple fields must be non-empty")


@dataclass
class ReasoningPath:
    triples: list[Triple]

    def __post_init__(self):
        for left, right in zip(self.triples, self.triples[1:]):
            if normalize_entity(left.tail) != normalize_entity(right.head):
                raise ConstraintError(
                    f"path not chain-linked: {left.tail!r} !-> {right.head!r}"
                )

    @property
    def endpoints(self) -> tuple[str, str]:
        return self.triples[0].head, self.triples[-1].tail


def parse_reasoning_path(text: str) -> ReasoningPath | None:
    """Parse the documented triple-line grammar; None when it does not apply."""
    triples = []
    for line in text.splitlines():
        m = _TRIPLE_RE.match(line)
        if m:
            triples.append(
                Triple(
                    head=m.group("head").strip(),
                    relation=m.group("rel").strip(),
                    tail=m.group("tail").strip(),
                    doc_id=m.group("doc").strip(),
                )
            )
    if not triples:
        return None
    try:
        return ReasoningPath(triples)
    except ConstraintError:
        return None


@dataclass
class Issue:
    level: str  # fail | warn
    code: str
    detail: str

    def to_dict(self) -> dict:
        return {"level": self.level, "code": self.code, "detail": self.detail}


@dataclass
class ValidationReport:
    issues: list[Issue] = field(default_factory=list)

    @property
    def failed(self) -> bool:
        return any(i.level == "fail" for i in self.issues)

    @property
    def warnings(self) -> list[Issue]:
        return [i for i in self.issues if i.level == "warn"]

    def add(self, level: str, code: str, detail: str):
        self.issues.append(Issue(level, code, detail))

    def to_dict(self) -> dict:
        return {"failed": self.failed, "issues": [i.to_dict() for i in self.issues]}


def check_fact_distribution(path: ReasoningPath) -> tuple[bool, int | None]:
    """Each triple from exactly one document, consecutive documents distinct."""
    for i, triple in enumerate(path.triples):
        if not triple.doc_id:
            return False, i
        if i > 0 and triple.doc_id == path.triples[i - 1].doc_id:
            return False, i
    return True, None


def check_no_shortcut(path: ReasoningPath, record: QuestionRecord) -> tuple[bool, str]:
    """Warn when one evidence segment mentions both path endpoints.

    Structural approximation only: corpus-wide shortcut detection would
    need relation extraction and is not attempted.
    """
    e_first, e_last = path.endpoints
    if normalize_entity(e_first) == normalize_entity(e_last):
        return True, ""
    for doc_id, segment in record.evidence:
        if contains_normalized(segment, e_first) and contains_normalized(segment, e_last):
            return False, doc_id
    return True, ""


def check_disjoint_sources(core: ComparisonCore) -> tuple[bool, str]:
    if not core.doc_a or not core.doc_b:
        return False, "missing doc id on one side of the comparison"
    if core.doc_a == core.doc_b:
        return False, f"both facts sourced from {core.doc_a}"
    return True, ""


def validate_record(record: QuestionRecord) -> ValidationReport:
    """Aggregate all applicable structural checks into one report."""
    report = ValidationReport()

    if not record.answer.strip():
        report.add("fail", "empty_answer", "answer must be non-empty")
    distinct = set(record.evidence_doc_ids())
    if len(distinct) < 2:
        report.add("fail", "evidence_not_cross_document", f"evidence doc ids: {sorted(distinct)}")
    if len(record.evidence) != record.hop_count:
        report.add(
            "warn",
            "evidence_count_mismatch",
            f"{len(record.evidence)} evidence entries for hop_count={record.hop_count}",
        )

    if record.qtype == "bridge" and isinstance(record.sub_parts, SubQuestionPair):
        entity = record.sub_parts.a1
        if entity and contains_normalized(record.question, entity):
            report.add("fail", "bridge_entity_revealed", f"question names {entity!r}")

    if record.qtype == "comparison" and isinstance(record.sub_parts, ComparisonCore):
        core = record.sub_parts
        ok, why = check_disjoint_sources(core)
        if not ok:
            report.add("fail", "sources_not_disjoint", why)
        if core.fact_a and core.fact_a not in core.paragraph_a:
            report.add("fail", "fact_a_outside_paragraph", "fact_a is not a substring of paragraph_a")
        if core.fact_b and core.fact_b not in core.paragraph_b:
            report.add("fail", "fact_b_outside_paragraph", "fact_b is not a substring of paragraph_b")

    path = parse_reasoning_path(record.reasoning_path)
    if path is not None:
        ok, idx = check_fact_distribution(path)
        if not ok:
            report.add("fail", "fact_distribution", f"violation at triple index {idx}")
        ok, doc_id = check_no_shortcut(path, record)
        if not ok:
            report.add("warn", "shortcut_segment", f"segment of {doc_id} mentions both endpoints")
    return report
