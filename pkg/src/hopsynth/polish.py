"""Validation/refinement pass over draft questions with four outcomes.

The polishing provider answers with a bracketed decision tag plus
``REFINED_*`` key-value lines; the outcome is applied as a pure field
override and the refined record is re-validated locally (the polisher is
itself a model and can violate the hiding rule it is meant to enforce).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace

from . import prompts
from .parsing import MalformedOutput, contains_normalized
from .records import ComparisonCore, QuestionRecord, SubQuestionPair

DECISIONS = ("PASS", "ADJUST", "REWORKED", "REJECTED")

_TAG_RE = re.compile(r"^\s*\[(?P<tag>[A-Z]+)\]\s*$", re.MULTILINE)
_KV_RE = re.compile(r"^(?P<key>REFINED_[A-Z_]+|REASON):\s*(?P<value>.*)$")


@dataclass
class PolishOutcome:
    decision: str
    refined_question: str | None = None
    refined_answer: str | None = None
    refined_reasoning_path: str | None = None
    refined_fact_a: str | None = None
    refined_fact_b: str | None = None
    reason: str | None = None


@dataclass
class Rejected:
    reason: str


def parse_polish_output(raw: str, qtype: str) -> PolishOutcome:
    """Parse the bracketed tag and refinement lines; enforce per-tag arity."""
    m = _TAG_RE.search(raw)
    if not m or m.group("tag") not in DECISIONS:
        raise MalformedOutput(f"no recognizable decision tag in: {raw[:120]!r}")
    decision = m.group("tag")

    fields: dict[str, str] = {}
    current: str | None = None
    for line in raw[m.end():].splitlines():
        kv = _KV_RE.match(line.strip())
        if kv:
            current = kv.group("key")
            fields[current] = kv.group("value").strip()
        elif current and line.strip():
            fields[current] += "\n" + line.strip()

    outcome = PolishOutcome(
        decision=decision,
        refined_question=fields.get("REFINED_QUESTION"),
        refined_answer=fields.get("REFINED_ANSWER"),
        refined_reasoning_path=fields.get("REFINED_REASONING_PATH"),
        refined_fact_a=fields.get("REFINED_FACT_A"),
        refined_fact_b=fields.get("REFINED_FACT_B"),
        reason=fields.get("REASON"),
    )
    if decision == "PASS" and any(
        v is not None
        for v in (outcome.refined_question, outcome.refined_answer, outcome.refined_reasoning_path)
    ):
        raise MalformedOutput("PASS must not carry refined fields")
    if decision == "ADJUST" and not outcome.refined_question:
        raise MalformedOutput("ADJUST requires REFINED_QUESTION")
    if decision == "REWORKED" and not (outcome.refined_question and outcome.refined_answer):
        raise MalformedOutput("REWORKED requires REFINED_QUESTION and REFINED_ANSWER")
    if decision == "REJECTED" and qtype == "comparison" and not outcome.reason:
        raise MalformedOutput("comparison REJECTED requires REASON")
    return outcome


def apply_outcome(record: QuestionRecord, outcome: PolishOutcome) -> QuestionRecord:
    """Apply field overrides for one parsed outcome (idempotent)."""
    rec = replace(
        record,
        provenance=list(record.provenance),
        flags=list(record.flags),
        evidence=list(record.evidence),
    )
    if outcome.decision in ("ADJUST", "REWORKED"):
        rec.question = outcome.refined_question or rec.question
        if outcome.refined_answer:
            rec.answer = outcome.refined_answer
            if isinstance(rec.sub_parts, SubQuestionPair):
                # keep the pair's final answer aligned with the emitted answer
                rec.sub_parts = replace(rec.sub_parts, a2=outcome.refined_answer)
        if outcome.refined_reasoning_path:
            rec.reasoning_path = outcome.refined_reasoning_path
        if isinstance(rec.sub_parts, ComparisonCore):
            core = rec.sub_parts
            rec.sub_parts = replace(
                core,
                fact_a=outcome.refined_fact_a or core.fact_a,
                fact_b=outcome.refined_fact_b or core.fact_b,
            )
    if outcome.decision == "REWORKED" and "reworked_evidence_unverified" not in rec.flags:
        # the polisher emits no refreshed evidence; keep originals but say so
        rec.flags.append("reworked_evidence_unverified")
    return rec


def _local_invariants_ok(record: QuestionRecord) -> tuple[bool, str]:
    if not record.answer.strip():
        return False, "refined answer is empty"
    if not record.question.strip():
        return False, "refined question is empty"
    if record.qtype == "bridge" and isinstance(record.sub_parts, SubQuestionPair):
        entity = record.sub_parts.a1
        if entity and contains_normalized(record.question, entity):
            return False, f"refined question reveals the linking entity {entity!r}"
    if isinstance(record.sub_parts, ComparisonCore):
        core = record.sub_parts
        if core.fact_a and core.fact_a not in core.paragraph_a:
            return False, "refined fact_a is not a substring of its paragraph"
        if core.fact_b and core.fact_b not in core.paragraph_b:
            return False, "refined fact_b is not a substring of its paragraph"
    return True, ""


def polish(record: QuestionRecord, chat) -> QuestionRecord | Rejected:
    """Run one polishing pass; returns the refined record or a rejection.

    Malformed provider output is retried once; a refinement that breaks the
    local invariants is downgraded to Rejected with a provenance note.
    """
    if record.qtype == "bridge":
        entity = record.sub_parts.a1 if isinstance(record.sub_parts, SubQuestionPair) else ""
        prompt = prompts.bridge_polish_prompt(record, entity)
    else:
        prompt = prompts.comparison_polish_prompt(record)

    outcome = None
    for attempt in (1, 2):
        raw = chat.chat(prompt)
        try:
            outcome = parse_polish_output(raw, record.qtype)
            break
        except MalformedOutput:
            if attempt == 2:
                return Rejected("malformed polisher output")

    if outcome.decision == "REJECTED":
        return Rejected(outcome.reason or "rejected by polisher")

    refined = apply_outcome(record, outcome)
    refined.log(
        "polish",
        decision=outcome.decision,
        original_question=record.question,
        refined_question=refined.question,
        original_answer=record.answer,
        refined_answer=refined.answer,
    )
    if outcome.decision != "PASS":
        ok, why = _local_invariants_ok(refined)
        if not ok:
            return Rejected(f"post-polish invariant violation: {why}")
    return refined
