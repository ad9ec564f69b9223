"""Every example block in tests/fixtures/grammar parses to its documented record."""

from pathlib import Path

from hopsynth.parsing import DecisionSentinel, parse_delimited_tuples, parse_sectioned
from hopsynth.polish import parse_polish_output
from hopsynth.quality.judge import parse_judge_output

FIXTURES = Path(__file__).parent / "fixtures" / "grammar"


def load(name: str) -> str:
    return (FIXTURES / name).read_text(encoding="utf-8")


def test_bridge_extraction_block():
    records = {r.tag: r for r in parse_delimited_tuples(load("bridge_extraction.txt"))}
    assert set(records) == {"bridge_entity", "relevant_segments", "query"}
    assert records["bridge_entity"].fields == ("Stonewell Bridge", "structure")
    assert "1821" in records["relevant_segments"].fields[1]
    assert records["query"].fields[0] == "Stonewell Bridge"


def test_compare_extraction_block():
    records = parse_delimited_tuples(load("compare_extraction.txt"))
    assert records[0].tag == "subject_entity"
    assert records[0].fields == ("Mount Harren", "mountain")
    attrs = [r for r in records if r.tag == "attribute"]
    assert len(attrs) == 3
    assert attrs[0].fields == ("Elevation", "2,410 m", "elevation of other mountains")


def test_filter_scores_block():
    records = parse_delimited_tuples(load("filter_scores.txt"))
    assert records[0].tag == "entity_score"
    assert records[0].fields == ("5",)
    scores = {r.fields[0]: int(r.fields[2]) for r in records if r.tag == "attribute_score"}
    assert scores == {"Elevation": 5, "First ascent": 4, "Range": 3}


def test_query_plan_blocks():
    recall = parse_delimited_tuples(load("query_plan_recall.txt"))
    assert recall[0].tag == "recall_focused_verify"
    assert recall[0].fields == (
        "Mount Veleta",
        "Elevation",
        "Mount Veleta elevation in metres",
    )
    search = parse_delimited_tuples(load("query_plan_search.txt"))
    assert search[0].tag == "search_queries"
    assert len(search[0].fields) == 3


def test_subquestion_blocks():
    outer = parse_sectioned(load("subquestions_valid.txt"), ["ANALYSIS", "SUB-QUESTIONS"])
    qa = parse_sectioned(
        outer["SUB-QUESTIONS"], ["Sub-question 1", "Answer 1", "Sub-question 2", "Answer 2"]
    )
    assert qa["Answer 1"] == "Stonewell Bridge"
    assert "Stonewell Bridge" in qa["Sub-question 2"]

    invalid = parse_sectioned(
        load("subquestions_invalid.txt"),
        ["ANALYSIS", "SUB-QUESTIONS"],
        sentinels=("INVALID_BRIDGE_CONNECTION",),
    )
    assert isinstance(invalid, DecisionSentinel)
    assert invalid.decision == "INVALID_BRIDGE_CONNECTION"
    assert invalid.reason


def test_fusion_blocks():
    schema = ["MULTI-HOP QUESTION", "ANSWER", "REASONING PATH", "SOURCES"]
    got = parse_sectioned(load("fusion_valid.txt"), schema)
    assert got["ANSWER"] == "the 1903 flood"
    assert "1821" in got["MULTI-HOP QUESTION"]

    none = parse_sectioned(load("fusion_none.txt"), schema, sentinels=("NONE",))
    assert none == DecisionSentinel("NONE", "the sub-questions share no usable link")


def test_polisher_blocks():
    assert parse_polish_output(load("polish_pass.txt"), "bridge").decision == "PASS"

    adjust = parse_polish_output(load("polish_adjust.txt"), "bridge")
    assert adjust.decision == "ADJUST"
    assert adjust.refined_question and adjust.refined_reasoning_path

    reworked = parse_polish_output(load("polish_reworked_comparison.txt"), "comparison")
    assert reworked.decision == "REWORKED"
    assert reworked.refined_answer == "Mount Veleta"
    assert reworked.refined_fact_a and reworked.refined_fact_b

    rejected = parse_polish_output(load("polish_rejected_comparison.txt"), "comparison")
    assert rejected.decision == "REJECTED"
    assert rejected.reason


def test_judge_block():
    multi_hop, dims = parse_judge_output(load("judge_block.txt"))
    assert multi_hop is True
    assert dims["Fluency"] == 4
    assert dims["Clarity"] == 5
    assert dims["ReasoningPathGuidance"] == 3
    assert len(dims) == 10


def test_builder_blocks():
    keys = [
        "entity_a",
        "entity_b",
        "attribute_compared",
        "multi_hop_question",
        "answer",
        "fact_entity_a",
        "fact_entity_b",
        "relevant_paragraph_a",
        "relevant_paragraph_b",
    ]
    got = parse_sectioned(load("builder_pass.txt"), ["PASS"] + keys, optional=["PASS"])
    assert got["entity_b"] == "Mount Veleta"
    assert got["fact_entity_a"] in got["relevant_paragraph_a"]
    assert got["fact_entity_b"] in got["relevant_paragraph_b"]
    assert load("builder_fail.txt").strip() == "FAIL"
