"""Dataset record types, rejection accounting and JSONL dataset IO.

Dataset file schema (one JSON object per line, keys sorted):
    id, qtype (bridge|comparison), question, answer, reasoning_path,
    sub_parts (sub-question pair or comparison core), hop_count,
    evidence [[doc_id, segment], ...], provenance [event, ...], flags.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field, asdict
from pathlib import Path


@dataclass
class SubQuestionPair:
    sq1: str
    a1: str
    sq2: str
    a2: str
    doc_b_segments: str = ""
    reasoning_path_note: str = ""


@dataclass
class ComparisonCore:
    entity_a: str
    entity_b: str
    attribute: str
    value_a: str
    value_b: str
    fact_a: str
    fact_b: str
    paragraph_a: str
    paragraph_b: str
    doc_a: str
    doc_b: str


@dataclass
class QuestionRecord:
    id: str
    qtype: str  # bridge | comparison
    question: str
    answer: str
    reasoning_path: str
    sub_parts: SubQuestionPair | ComparisonCore | None
    evidence: list[tuple[str, str]]  # (doc_id, segment)
    provenance: list[dict] = field(default_factory=list)
    hop_count: int = 2
    flags: list[str] = field(default_factory=list)

    def log(self, event: str, **detail):
        self.provenance.append({"seq": len(self.provenance), "event": event, **detail})

    def evidence_doc_ids(self) -> list[str]:
        return [doc_id for doc_id, _ in self.evidence]

    def to_dict(self) -> dict:
        d = {
            "id": self.id,
            "qtype": self.qtype,
            "question": self.question,
            "answer": self.answer,
            "reasoning_path": self.reasoning_path,
            "sub_parts": asdict(self.sub_parts) if self.sub_parts is not None else None,
            "evidence": [[doc_id, seg] for doc_id, seg in self.evidence],
            "provenance": self.provenance,
            "hop_count": self.hop_count,
            "flags": self.flags,
        }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "QuestionRecord":
        sub = d.get("sub_parts")
        sub_parts: SubQuestionPair | ComparisonCore | None = None
        if sub is not None:
            sub_parts = ComparisonCore(**sub) if "entity_a" in sub else SubQuestionPair(**sub)
        return cls(
            id=d["id"],
            qtype=d["qtype"],
            question=d["question"],
            answer=d["answer"],
            reasoning_path=d["reasoning_path"],
            sub_parts=sub_parts,
            evidence=[(e[0], e[1]) for e in d["evidence"]],
            provenance=list(d.get("provenance", [])),
            hop_count=d.get("hop_count", 2),
            flags=list(d.get("flags", [])),
        )


class RejectionLedger:
    """Per-stage rejection counters; attempts = successes + sum(rejections)."""

    def __init__(self, stages: tuple[str, ...]):
        self.stages = stages
        self._lock = threading.Lock()
        self.counters: dict[str, int] = {s: 0 for s in stages}
        self.successes = 0

    def reject(self, stage: str):
        if stage not in self.counters:
            raise ValueError(f"unknown rejection stage {stage!r}")
        with self._lock:
            self.counters[stage] += 1

    def success(self):
        with self._lock:
            self.successes += 1

    @property
    def attempts(self) -> int:
        return self.successes + sum(self.counters.values())

    def rates(self) -> dict[str, float]:
        total = self.attempts
        return {s: (c / total if total else 0.0) for s, c in self.counters.items()}

    def avg_attempts_per_success(self) -> float:
        return self.attempts / self.successes if self.successes else float("inf")

    def to_dict(self) -> dict:
        return {
            "attempts": self.attempts,
            "successes": self.successes,
            "rejections": dict(self.counters),
            "rates": self.rates(),
        }


BRIDGE_STAGES = ("extraction_malformed", "retrieval_empty", "step3a_subq", "step3b_fusion", "polisher_reject")
COMPARISON_STAGES = ("extraction_malformed", "retrieval_empty", "filter", "construction", "polisher_reject")


def write_dataset(records: list[QuestionRecord], path: str | Path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")


def read_dataset(path: str | Path) -> list[QuestionRecord]:
    records = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            records.append(QuestionRecord.from_dict(json.loads(line)))
    return records
