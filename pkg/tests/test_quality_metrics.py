import math
import random

import pytest

from hopsynth.quality.qa_metrics import em, normalize_answer, token_f1
from hopsynth.quality.retrieval_audit import (
    average_precision,
    ndcg_at_k,
    recall_at_k,
    retrieval_audit,
    support_f1,
)
from hopsynth.records import QuestionRecord

# --- EM / token F1 ---


def test_em_identical():
    assert em("Paris", "Paris") == 1


def test_em_article_stripping_and_case():
    assert em("the Paris", "Paris") == 1
    assert em("PARIS.", "paris") == 1


def test_em_mismatch_and_f1_zero():
    assert em("London", "Paris") == 0
    assert token_f1("London", "Paris") == 0.0


def test_f1_multiset_order_insensitive():
    # two-token answers in swapped order (letters chosen outside the article list)
    assert em("X Y", "Y X") == 0
    assert token_f1("X Y", "Y X") == 1.0


def test_f1_partial_overlap_hand_arithmetic():
    # precision 2/3, recall 1 -> F1 = 2*(2/3)/(2/3+1) = 0.8
    assert token_f1("X Y Z", "X Y") == pytest.approx(0.8, abs=1e-12)


def test_f1_duplicate_tokens_multiset():
    # pred {x:2}, gold {x:1}: overlap 1, precision 1/2, recall 1 -> 2/3
    assert token_f1("x x", "x") == pytest.approx(2 / 3, abs=1e-12)


def test_empty_gold_is_error():
    with pytest.raises(ValueError):
        em("x", "  ")
    with pytest.raises(ValueError):
        token_f1("x", "")


def test_em_implies_f1_one():
    rng = random.Random(4)
    words = ["alpha", "the", "Beta-2", "GAMMA", "delta"]
    for _ in range(200):
        s = " ".join(rng.choice(words) for _ in range(rng.randint(1, 4)))
        if em(s, s.upper()) == 1:
            assert token_f1(s, s.upper()) == pytest.approx(1.0)


def test_normalize_answer():
    assert normalize_answer("The  quick, brown fox!") == "quick brown fox"


# --- retrieval audit ---


def record(qid, golden):
    return QuestionRecord(
        id=qid,
        qtype="bridge",
        question=f"question {qid}",
        answer="a",
        reasoning_path="",
        sub_parts=None,
        evidence=[(g, "seg") for g in golden],
        hop_count=len(golden),
    )


FIXTURE_RANKINGS = {
    "question q1": ["A", "X", "B", "Y", "Z"],  # golden {A, B}
    "question q2": ["X", "C", "Y", "Z", "W"],  # golden {C}
    "question q3": ["D", "E", "X", "Y", "Z"],  # golden {D, E}
}

DATASET = [record("q1", ["A", "B"]), record("q2", ["C"]), record("q3", ["D", "E"])]


def fixture_retriever(query, k):
    return FIXTURE_RANKINGS[query][:k]


def spreadsheet_oracle():
    """Hand arithmetic for the 3-question fixture, written out term by term."""
    log2 = math.log2
    # q1: golden {A,B}, hits at ranks 1 and 3
    ap1 = (1 / 1 + 2 / 3) / 2
    idcg2 = 1 / log2(2) + 1 / log2(3)
    q1 = {
        "ap": ap1,
        "r": {1: 1 / 2, 3: 2 / 2, 5: 2 / 2},
        "n": {1: (1 / log2(2)) / idcg2, 3: (1 / log2(2) + 1 / log2(4)) / idcg2,
              5: (1 / log2(2) + 1 / log2(4)) / idcg2},
        "f1": 0.5,  # top-2 {A,X} vs {A,B}: precision 1/2, recall 1/2
    }
    # q2: golden {C}, hit at rank 2
    q2 = {
        "ap": (1 / 2) / 1,
        "r": {1: 0.0, 3: 1.0, 5: 1.0},
        "n": {1: 0.0, 3: (1 / log2(3)) / (1 / log2(2)), 5: (1 / log2(3)) / (1 / log2(2))},
        "f1": 0.0,  # top-1 {X} vs {C}
    }
    # q3: golden {D,E}, hits at ranks 1 and 2
    q3 = {
        "ap": (1 / 1 + 2 / 2) / 2,
        "r": {1: 1 / 2, 3: 1.0, 5: 1.0},
        "n": {1: (1 / log2(2)) / idcg2, 3: idcg2 / idcg2, 5: idcg2 / idcg2},
        "f1": 1.0,  # top-2 {D,E} vs {D,E}
    }
    qs = [q1, q2, q3]
    return {
        "map": sum(q["ap"] for q in qs) / 3,
        "recall_at": {k: sum(q["r"][k] for q in qs) / 3 for k in (1, 3, 5)},
        "ndcg_at": {k: sum(q["n"][k] for q in qs) / 3 for k in (1, 3, 5)},
        "support_f1": sum(q["f1"] for q in qs) / 3,
    }


def test_audit_matches_spreadsheet_oracle():
    audit = retrieval_audit(DATASET, fixture_retriever, ks=(1, 3, 5), method_id="fixture")
    oracle = spreadsheet_oracle()
    assert audit.n == 3
    assert audit.map == pytest.approx(oracle["map"], abs=1e-9)
    for k in (1, 3, 5):
        assert audit.recall_at[k] == pytest.approx(oracle["recall_at"][k], abs=1e-9)
        assert audit.ndcg_at[k] == pytest.approx(oracle["ndcg_at"][k], abs=1e-9)
    assert audit.support_f1 == pytest.approx(oracle["support_f1"], abs=1e-9)


def test_single_golden_at_rank_one():
    assert average_precision(["A", "x"], {"A"}) == 1.0
    assert ndcg_at_k(["A", "x", "y", "z", "w"], {"A"}, 5) == 1.0
    assert recall_at_k(["A"], {"A", "B"}, 5) == 0.5


def test_recall_monotone_in_k_1000_random():
    rng = random.Random(17)
    universe = [f"d{i}" for i in range(30)]
    for _ in range(1000):
        ranking = rng.sample(universe, 20)
        golden = set(rng.sample(universe, rng.randint(1, 5)))
        values = [recall_at_k(ranking, golden, k) for k in range(1, 21)]
        assert all(a <= b + 1e-12 for a, b in zip(values, values[1:]))


def test_ndcg_monotone_in_k_on_fixed_ranking():
    rng = random.Random(29)
    universe = [f"d{i}" for i in range(20)]
    for _ in range(300):
        ranking = rng.sample(universe, 15)
        golden = set(rng.sample(universe, rng.randint(1, 4)))
        values = [ndcg_at_k(ranking, golden, k) for k in range(1, 16)]
        assert all(a <= b + 1e-12 for a, b in zip(values, values[1:]))


def test_support_f1_cutoff_default_golden_size():
    assert support_f1(["A", "B", "X"], {"A", "B"}) == 1.0
    assert support_f1(["X", "A", "B"], {"A", "B"}) == 0.5
    assert support_f1(["X", "A", "B"], {"A", "B"}, cutoff=3) == pytest.approx(0.8)


def test_audit_skips_empty_golden():
    audit = retrieval_audit(
        [record("q1", ["A", "B"]), record("empty", [])],
        lambda q, k: FIXTURE_RANKINGS.get(q, ["A"] * 0) or ["A", "X", "B", "Y", "Z"][:k],
        ks=(5,),
    )
    assert audit.n == 1
    assert audit.skipped == 1
