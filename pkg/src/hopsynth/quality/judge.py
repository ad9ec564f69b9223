"""Pointwise judging of QA pairs plus aggregation and reliability reports.

A judge run yields a binary cross-document flag and ten dimensions rated on
the closed vocabulary Very Poor..Very Good, mapped to 1..5. Reliability is
computed per (judge, dimension) treating the N repeated runs as raters;
repeated runs always bypass the response cache.
"""

from __future__ import annotations

import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

from .. import prompts
from ..parsing import COMPLETE_SENTINEL, MalformedOutput
from ..records import QuestionRecord
from .reliability import avg_intra_item_sd, fleiss_kappa, krippendorff_alpha

RATING_SCALE = {
    "very poor": 1,
    "poor": 2,
    "fair": 3,
    "good": 4,
    "very good": 5,
}

DIMENSIONS = (
    "Fluency",
    "Clarity",
    "Conciseness",
    "Relevance",
    "Consistency",
    "QuestionAnswerability",
    "AnswerQuestionConsistency",
    "InformationIntegration",
    "ReasoningPathGuidance",
    "LogicalSophistication",
)

# display labels in judge output -> canonical dimension keys
_LABELS = {
    "fluency": "Fluency",
    "clarity": "Clarity",
    "conciseness": "Conciseness",
    "relevance": "Relevance",
    "consistency": "Consistency",
    "question answerability": "QuestionAnswerability",
    "answer-question consistency": "AnswerQuestionConsistency",
    "information integration ability": "InformationIntegration",
    "information integration": "InformationIntegration",
    "reasoning path guidance": "ReasoningPathGuidance",
    "logical sophistication": "LogicalSophistication",
}
_FLAG_LABEL = "multi-hop reasoning requirement"

_LINE_RE = re.compile(r"^\s*-?\s*(?P<label>[^:]+):\s*(?P<value>.+?)\s*$")


@dataclass
class JudgeAssessment:
    item_id: str
    judge_id: str
    run_index: int
    multi_hop: bool
    dims: dict[str, int]

    def to_dict(self) -> dict:
        return {
            "item_id": self.item_id,
            "judge_id": self.judge_id,
            "run_index": self.run_index,
            "multi_hop": self.multi_hop,
            "dims": dict(self.dims),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "JudgeAssessment":
        return cls(d["item_id"], d["judge_id"], d["run_index"], d["multi_hop"], dict(d["dims"]))


def parse_judge_output(raw: str) -> tuple[bool, dict[str, int]]:
    """Parse the line-per-dimension block; closed rating vocabulary only."""
    text = raw.strip()
    if not text.endswith(COMPLETE_SENTINEL):
        raise MalformedOutput(f"missing {COMPLETE_SENTINEL} sentinel")
    multi_hop: bool | None = None
    dims: dict[str, int] = {}
    for line in text[: -len(COMPLETE_SENTINEL)].splitlines():
        m = _LINE_RE.match(line)
        if not m:
            continue
        label = m.group("label").strip().casefold()
        value = m.group("value").strip().casefold()
        if label == _FLAG_LABEL:
            if value not in ("yes", "no"):
                raise MalformedOutput(f"flag must be yes/no, got {value!r}")
            multi_hop = value == "yes"
        elif label in _LABELS:
            if value not in RATING_SCALE:
                raise MalformedOutput(f"unknown rating word {value!r} for {label!r}")
            dims[_LABELS[label]] = RATING_SCALE[value]
    if multi_hop is None:
        raise MalformedOutput("missing multi-hop flag line")
    missing = [d for d in DIMENSIONS if d not in dims]
    if missing:
        raise MalformedOutput(f"missing dimensions: {', '.join(missing)}")
    return multi_hop, dims


def judge(
    item: QuestionRecord,
    judge_provider,
    judge_id: str,
    runs: int = 5,
    cache_off: bool = True,
) -> tuple[list[JudgeAssessment], int]:
    """Run the judge `runs` times over one item.

    Malformed runs are retried once, then dropped; returns the assessments
    plus the dropped-run count.
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    prompt = prompts.judge_prompt(item)
    assessments = []
    dropped = 0
    for run_index in range(runs):
        parsed = None
        for attempt in (1, 2):
            raw = judge_provider.chat(prompt, use_cache=not cache_off)
            try:
                parsed = parse_judge_output(raw)
                break
            except MalformedOutput:
                if attempt == 2:
                    dropped += 1
        if parsed is None:
            continue
        multi_hop, dims = parsed
        assessments.append(
            JudgeAssessment(
                item_id=item.id,
                judge_id=judge_id,
                run_index=run_index,
                multi_hop=multi_hop,
                dims=dims,
            )
        )
    return assessments, dropped


def judge_dataset(
    dataset: Sequence[QuestionRecord],
    judge_providers: dict[str, object],
    runs: int = 5,
    cache_off: bool = True,
    parallelism: int = 1,
) -> tuple[list[JudgeAssessment], int]:
    """Judge every item with every judge; deterministic output ordering."""
    jobs = [(item, jid, provider) for item in dataset for jid, provider in sorted(judge_providers.items())]

    def _run(job):
        item, jid, provider = job
        return judge(item, provider, jid, runs=runs, cache_off=cache_off)

    if parallelism > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(_run, jobs))
    else:
        results = [_run(j) for j in jobs]

    assessments: list[JudgeAssessment] = []
    dropped = 0
    for got, d in results:
        assessments.extend(got)
        dropped += d
    return assessments, dropped


@dataclass
class QualityReport:
    n_items: int
    multi_hop_pct: float
    avg_score: float
    per_dimension: dict[str, float]
    per_item: dict[str, dict] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "n_items": self.n_items,
            "multi_hop_pct": self.multi_hop_pct,
            "avg_score": self.avg_score,
            "per_dimension": dict(sorted(self.per_dimension.items())),
            "per_item": {k: self.per_item[k] for k in sorted(self.per_item)},
        }


def aggregate_quality(
    assessments: Sequence[JudgeAssessment],
    judges: set[str] | None = None,
    include_non_multihop: bool = True,
) -> QualityReport:
    """Per-item means over dimensions/judges/runs plus corpus aggregates.

    The corpus cross-document rate is the fraction of items where strictly
    more than half of all pooled judge runs answered yes. Items flagged
    non-multi-hop by that majority can be excluded from the corpus average
    score via `include_non_multihop`.
    """
    pool = [a for a in assessments if judges is None or a.judge_id in judges]
    items = sorted({a.item_id for a in pool})
    per_item: dict[str, dict] = {}
    dim_sums = {d: 0.0 for d in DIMENSIONS}
    dim_counts = {d: 0 for d in DIMENSIONS}

    multi_hop_yes = 0
    for item_id in items:
        runs = [a for a in pool if a.item_id == item_id]
        yes = sum(1 for a in runs if a.multi_hop)
        majority = yes * 2 > len(runs)
        all_scores = [v for a in runs for v in a.dims.values()]
        avg = sum(all_scores) / len(all_scores)
        per_item[item_id] = {"avg_score": avg, "multi_hop": majority, "runs": len(runs)}
        if majority:
            multi_hop_yes += 1
        for a in runs:
            for d, v in a.dims.items():
                dim_sums[d] += v
                dim_counts[d] += 1

    scored = [
        v["avg_score"]
        for v in per_item.values()
        if include_non_multihop or v["multi_hop"]
    ]
    return QualityReport(
        n_items=len(items),
        multi_hop_pct=100.0 * multi_hop_yes / len(items) if items else 0.0,
        avg_score=sum(scored) / len(scored) if scored else 0.0,
        per_dimension={
            d: (dim_sums[d] / dim_counts[d] if dim_counts[d] else 0.0) for d in DIMENSIONS
        },
        per_item=per_item,
    )


@dataclass
class ReliabilityReport:
    judge_id: str
    n_runs: int
    avg_sd: float
    krippendorff_alpha: float
    fleiss_kappa: float
    per_dimension: dict[str, dict[str, float]]
    flags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "judge_id": self.judge_id,
            "n_runs": self.n_runs,
            "avg_sd": self.avg_sd,
            "krippendorff_alpha": self.krippendorff_alpha,
            "fleiss_kappa": self.fleiss_kappa,
            "per_dimension": {k: dict(v) for k, v in sorted(self.per_dimension.items())},
            "flags": self.flags,
        }


def reliability_report(assessments: Sequence[JudgeAssessment], judge_id: str) -> ReliabilityReport:
    """Per-dimension and aggregate self-consistency for one judge.

    Requires the same run count for every item. Scalar aggregates average
    the ten Likert dimensions; the binary flag appears as its own
    MultiHop row (nominal alpha).
    """
    runs = sorted({a.run_index for a in assessments if a.judge_id == judge_id})
    items = sorted({a.item_id for a in assessments if a.judge_id == judge_id})
    if not items or len(runs) < 2:
        raise ValueError("reliability needs >=1 item and >=2 runs for the judge")
    by_key = {
        (a.item_id, a.run_index): a for a in assessments if a.judge_id == judge_id
    }
    if len(by_key) != len(items) * len(runs):
        raise ValueError(
            f"expected {len(items) * len(runs)} assessments "
            f"({len(items)} items x {len(runs)} runs), got {len(by_key)}"
        )

    per_dimension: dict[str, dict[str, float]] = {}
    flags: list[str] = []
    for dim in DIMENSIONS:
        matrix = [[by_key[(i, r)].dims[dim] for r in runs] for i in items]
        alpha, a_flags = krippendorff_alpha(matrix, metric="interval")
        flags.extend(f"{dim}:{f}" for f in a_flags)
        try:
            kappa = fleiss_kappa(matrix)
        except Exception:
            kappa = 1.0
            flags.append(f"{dim}:kappa_undefined_perfect_agreement")
        per_dimension[dim] = {
            "avg_sd": avg_intra_item_sd(matrix),
            "alpha": alpha,
            "kappa": kappa,
        }

    flag_matrix = [[by_key[(i, r)].multi_hop for r in runs] for i in items]
    alpha, a_flags = krippendorff_alpha(flag_matrix, metric="nominal")
    flags.extend(f"MultiHop:{f}" for f in a_flags)
    try:
        kappa = fleiss_kappa(flag_matrix)
    except Exception:
        kappa = 1.0
        flags.append("MultiHop:kappa_undefined_perfect_agreement")
    per_dimension["MultiHop"] = {"avg_sd": 0.0, "alpha": alpha, "kappa": kappa}

    likert = [per_dimension[d] for d in DIMENSIONS]
    return ReliabilityReport(
        judge_id=judge_id,
        n_runs=len(runs),
        avg_sd=sum(v["avg_sd"] for v in likert) / len(likert),
        krippendorff_alpha=sum(v["alpha"] for v in likert) / len(likert),
        fleiss_kappa=sum(v["kappa"] for v in likert) / len(likert),
        per_dimension=per_dimension,
        flags=flags,
    )


@dataclass
class DiagnosticResult:
    model_id: str
    mode: str  # QOnly | QDocs
    em: float
    f1: float
    n: int
    skipped: int = 0

    def to_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "mode": self.mode,
            "em": self.em,
            "f1": self.f1,
            "n": self.n,
            "skipped": self.skipped,
        }


def diagnostic_qa(
    dataset: Sequence[QuestionRecord],
    solver,
    model_id: str,
    mode: str,
    parallelism: int = 1,
) -> DiagnosticResult:
    """Solve each question with or without its golden evidence; score EM/F1."""
    from .qa_metrics import em as em_fn, token_f1

    if mode not in ("QOnly", "QDocs"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "QDocs" and any(not r.evidence for r in dataset):
        raise ValueError("QDocs mode requires evidence segments on every item")

    def _solve(record: QuestionRecord):
        try:
            return solver.chat(prompts.solver_prompt(record, mode))
        except Exception:
            return None

    if parallelism > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            answers = list(pool.map(_solve, dataset))
    else:
        answers = [_solve(r) for r in dataset]

    em_sum = 0
    f1_sum = 0.0
    n = 0
    skipped = 0
    for record, pred in zip(dataset, answers):
        if pred is None:
            skipped += 1
            continue
        em_sum += em_fn(pred, record.answer)
        f1_sum += token_f1(pred, record.answer)
        n += 1
    return DiagnosticResult(
        model_id=model_id,
        mode=mode,
        em=em_sum / n if n else 0.0,
        f1=f1_sum / n if n else 0.0,
        n=n,
        skipped=skipped,
    )
