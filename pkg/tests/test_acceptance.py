"""Acceptance suite: one test per release criterion, each printing a
PASS line on success (run with -s to see them inline)."""

import json
import math
import random
import string
import time
from pathlib import Path

import numpy as np
import pytest

from hopsynth.cli import main as cli_main
from hopsynth.constraints import validate_record
from hopsynth.parsing import (
    TupleRecord,
    format_delimited_tuples,
    format_sectioned,
    parse_delimited_tuples,
    parse_sectioned,
)
from hopsynth.providers import estimate_cost
from hopsynth.quality.qa_metrics import em, token_f1
from hopsynth.quality.reliability import fleiss_kappa, krippendorff_alpha
from hopsynth.quality.retrieval_audit import recall_at_k, retrieval_audit
from hopsynth.records import read_dataset
from hopsynth.retrieval import MmrParams, mmr_select
from hopsynth.bridge import BridgePipeline
from hopsynth.comparison import ComparisonPipeline
from hopsynth.triples import listwise_loss

from cli_workspace import write_workspace
from scripted_world import (
    BridgeWorld,
    ComparisonWorld,
    build_world_engine,
    build_world_store,
    constant_reranker,
)
from test_quality_metrics import DATASET, fixture_retriever, spreadsheet_oracle
from test_reliability import FLEISS_COUNTS, FOUR_CODER_EXAMPLE, counts_to_labels
from test_retrieval import oracle_greedy, unit_rows


def ok(name: str):
    print(f"[ACCEPTANCE] {name}: PASS")


def test_mmr_oracle_equivalence():
    start = time.monotonic()
    rng = np.random.default_rng(1234)
    params = MmrParams(lambda1=0.87, lambda2=0.03, lambda3=0.1, pool_size=8, k=5)
    for _ in range(200):
        n = int(rng.integers(1, 9))
        vecs = unit_rows(rng, n + 2, 8)
        ids = [f"c{i:02d}" for i in range(n)]
        got = mmr_select(vecs[n], vecs[n + 1], ids, vecs[:n], params)
        expected = oracle_greedy(vecs[n], vecs[n + 1], ids, vecs[:n], params)
        assert got.ids() == [d for d, _ in expected]
        for (_, a), (_, b) in zip(got.entries, expected):
            assert a == pytest.approx(b, abs=1e-9)
    elapsed = time.monotonic() - start
    assert elapsed < 5.0

    degenerate = MmrParams(lambda1=1.0, lambda2=0.0, lambda3=0.0, pool_size=10, k=10)
    for _ in range(1000):
        n = int(rng.integers(2, 11))
        vecs = unit_rows(rng, n + 1, 6)
        ids = [f"d{i:02d}" for i in range(n)]
        rel = vecs[:n] @ vecs[n]
        expected_order = [ids[i] for i in sorted(range(n), key=lambda i: (-rel[i], ids[i]))]
        assert mmr_select(vecs[n], None, ids, vecs[:n], degenerate).ids() == expected_order
    ok(f"MMR oracle equivalence (200 sets in {elapsed:.2f}s + 1000 degenerate cases)")


def test_metric_oracles():
    audit = retrieval_audit(DATASET, fixture_retriever, ks=(1, 3, 5), method_id="fixture")
    oracle = spreadsheet_oracle()
    assert audit.map == pytest.approx(oracle["map"], abs=1e-9)
    for k in (1, 3, 5):
        assert audit.recall_at[k] == pytest.approx(oracle["recall_at"][k], abs=1e-9)
        assert audit.ndcg_at[k] == pytest.approx(oracle["ndcg_at"][k], abs=1e-9)
    assert audit.support_f1 == pytest.approx(oracle["support_f1"], abs=1e-9)

    rng = random.Random(55)
    universe = [f"d{i}" for i in range(40)]
    for _ in range(1000):
        ranking = rng.sample(universe, 25)
        golden = set(rng.sample(universe, rng.randint(1, 6)))
        values = [recall_at_k(ranking, golden, k) for k in range(1, 26)]
        assert all(a <= b + 1e-12 for a, b in zip(values, values[1:]))
    ok("retrieval metric spreadsheet oracle (1e-9) + Recall@k monotone on 1000 rankings")


def test_reliability_metrics():
    alpha_nom, _ = krippendorff_alpha(FOUR_CODER_EXAMPLE, metric="nominal")
    assert alpha_nom == pytest.approx(113 / 152, abs=1e-6)
    alpha_int, _ = krippendorff_alpha(FOUR_CODER_EXAMPLE, metric="interval")
    assert alpha_int == pytest.approx(951 / 1120, abs=1e-6)
    kappa = fleiss_kappa(counts_to_labels(FLEISS_COUNTS))
    assert kappa == pytest.approx(4211 / 20059, abs=1e-6)

    perfect = [[1, 1, 1], [2, 2, 2], [3, 3, 3]]
    assert krippendorff_alpha(perfect, metric="nominal")[0] == 1.0
    assert krippendorff_alpha(perfect, metric="interval")[0] == 1.0
    assert fleiss_kappa(perfect) == 1.0

    rng = random.Random(77)
    shuffled = [[rng.randint(1, 5) for _ in range(5)] for _ in range(10_000)]
    a_nom, _ = krippendorff_alpha(shuffled, metric="nominal")
    a_int, _ = krippendorff_alpha(shuffled, metric="interval")
    k_val = fleiss_kappa(shuffled)
    assert abs(a_nom) < 0.05 and abs(a_int) < 0.05 and abs(k_val) < 0.05
    ok("reliability textbook oracles (1e-6), perfect=1.0, shuffled<0.05 on 10k items")


def test_pipeline_conservation_table_rates(tmp_path):
    # bridge: 1000 single-candidate attempts split 223 / 31 / 31 / 715
    store = build_world_store(tmp_path / "bridge", n_docs=1000, prefix="b")
    ids = store.ids()
    world = BridgeWorld(
        subq_reject=set(ids[:223]),
        fusion_reject=set(ids[223:254]),
        polish_reject=set(ids[254:285]),
    )
    pipeline = BridgePipeline(
        store, build_world_engine(store), world.generator(), world.polisher(),
        constant_reranker(), params=MmrParams(pool_size=5, k=1),
    )
    records, ledger = pipeline.run(seed=1, budget=1000)
    assert ledger.attempts == 1000
    assert ledger.successes + sum(ledger.counters.values()) == ledger.attempts
    assert ledger.counters["step3a_subq"] == 223
    assert ledger.counters["step3b_fusion"] == 31
    assert ledger.counters["polisher_reject"] == 31
    assert len(records) == ledger.successes == 715
    rates = ledger.rates()
    assert rates["step3a_subq"] == 223 / 1000 == 0.223
    assert rates["step3b_fusion"] == 31 / 1000 == 0.031
    assert rates["polisher_reject"] == 31 / 1000 == 0.031

    # comparison: 1000 source attempts split 66 / 19 / 19 / 896
    store_c = build_world_store(tmp_path / "cmp", n_docs=1000, prefix="m")
    ids_c = store_c.ids()
    world_c = ComparisonWorld(
        filter_reject=set(ids_c[:66]),
        builder_fail=set(ids_c[66:85]),
        polish_reject=set(ids_c[85:104]),
    )
    pipeline_c = ComparisonPipeline(
        store_c, build_world_engine(store_c), world_c.generator(),
        world_c.filter_provider(), world_c.polisher(),
    )
    records_c, ledger_c = pipeline_c.run(seed=1, budget=1000)
    assert ledger_c.attempts == 1000
    assert ledger_c.successes + sum(ledger_c.counters.values()) == 1000
    assert ledger_c.counters["filter"] == 66
    assert ledger_c.counters["construction"] == 19
    assert ledger_c.counters["polisher_reject"] == 19
    assert len(records_c) == 896
    rates_c = ledger_c.rates()
    assert rates_c["filter"] == 0.066
    assert rates_c["construction"] == 0.019
    assert rates_c["polisher_reject"] == 0.019
    ok("ledger conservation exact; 22.3/3.1/3.1 and 6.6/1.9/1.9 schedules reproduced")


def test_cost_arithmetic():
    requests = 7600  # 1000 questions at 7.6 requests each
    cost = estimate_cost(
        requests,
        input_tokens=round(1529.97 * requests),
        output_tokens=round(231.32 * requests),
        price_in_per_Mtok=0.15,
        price_out_per_Mtok=3.50,
    )
    assert abs(cost - 7.90) <= 0.05
    ok(f"cost arithmetic: 1000 questions -> ${cost:.4f} (within $7.90 +/- 0.05)")


def test_parser_grammar_roundtrips():
    field_alphabet = "".join(
        c for c in (string.ascii_letters + string.digits + " .,-_/!?") if c not in '<|>#()"\''
    )
    rng = random.Random(31415)
    for _ in range(10_000):
        records = [
            TupleRecord(
                "".join(rng.choice(string.ascii_lowercase) for _ in range(rng.randint(1, 8))),
                tuple(
                    "".join(rng.choice(field_alphabet) for _ in range(rng.randint(0, 15))).strip()
                    for _ in range(rng.randint(1, 5))
                ),
            )
            for _ in range(rng.randint(1, 4))
        ]
        assert parse_delimited_tuples(format_delimited_tuples(records)) == records

    body_alphabet = "".join(c for c in (string.ascii_letters + string.digits + " ,.-") if c != ":")
    keys = ["ALPHA", "BETA", "GAMMA DELTA", "EPSILON"]
    for _ in range(10_000):
        schema = keys[: rng.randint(1, len(keys))]
        sections = {
            key: "\n".join(
                line
                for line in (
                    "".join(rng.choice(body_alphabet) for _ in range(rng.randint(1, 25))).strip()
                    for _ in range(rng.randint(1, 3))
                )
                if line
            )
            for key in schema
        }
        assert parse_sectioned(format_sectioned(sections), schema) == sections

    fixtures = Path(__file__).parent / "fixtures" / "grammar"
    assert len(list(fixtures.glob("*.txt"))) >= 16  # parsed in detail by test_grammar_fixtures
    ok("parser grammars: 10k tuple + 10k sectioned round-trips, fixture blocks present")


def _run_cli(config: Path, *argv: str) -> int:
    return cli_main(["--config", str(config), *argv])


def _synthesize_50(root: Path, seed: int = 7) -> Path:
    config = write_workspace(root, n_docs=60, seed=seed)
    assert _run_cli(config, "ingest", str(root / "corpus.jsonl")) == 0
    assert _run_cli(config, "index") == 0
    assert _run_cli(config, "synth", "bridge", "--budget", "80", "--target", "25") == 0
    assert _run_cli(config, "synth", "compare", "--budget", "80", "--target", "25") == 0
    return config


def test_constraint_validators_end_to_end(tmp_path):
    config = _synthesize_50(tmp_path / "ws")
    out = tmp_path / "ws" / "out"
    records = read_dataset(out / "bridge.jsonl") + read_dataset(out / "comparison.jsonl")
    assert len(records) == 50
    for rec in records:
        report = validate_record(rec)
        assert not report.failed, f"{rec.id}: {report.to_dict()}"

    # mutation 1: collapse a comparison's evidence onto one document
    mutant = read_dataset(out / "comparison.jsonl")[0]
    mutant.sub_parts.doc_b = mutant.sub_parts.doc_a
    mutant.evidence = [(mutant.sub_parts.doc_a, "x"), (mutant.sub_parts.doc_a, "y")]
    report = validate_record(mutant)
    assert report.failed
    assert any(i.code in ("sources_not_disjoint", "evidence_not_cross_document")
               for i in report.issues)

    # mutation 2: reveal the linking entity inside a bridge question
    leaky = read_dataset(out / "bridge.jsonl")[0]
    leaky.question = f"Does {leaky.sub_parts.a1} explain {leaky.question}"
    report = validate_record(leaky)
    assert report.failed
    assert any(i.code == "bridge_entity_revealed" for i in report.issues)

    # mutation 3: same-document reasoning triples
    broken = read_dataset(out / "bridge.jsonl")[1]
    doc = broken.evidence_doc_ids()[0]
    broken.reasoning_path = (
        f"a -> r -> b [doc: {doc}]\n"
        f"b -> r -> c [doc: {doc}]"
    )
    assert any(i.code == "fact_distribution" for i in validate_record(broken).issues)
    ok("constraint validators: 50/50 records clean, injected violations caught")


def test_end_to_end_determinism(tmp_path):
    start = time.monotonic()
    digests = []
    for name in ("runA", "runB"):
        root = tmp_path / name
        config = _synthesize_50(root, seed=7)
        out = root / "out"
        assert _run_cli(config, "judge", str(out / "bridge.jsonl"), "--runs", "2") == 0
        assert _run_cli(config, "report", str(out / "assessments.jsonl")) == 0
        digests.append(
            tuple(
                (out / f).read_bytes()
                for f in (
                    "bridge.jsonl",
                    "comparison.jsonl",
                    "bridge_ledger.json",
                    "comparison_ledger.json",
                    "assessments.jsonl",
                    "quality_report.json",
                    "quality_summary.txt",
                    "per_dimension.csv",
                )
            )
        )
    elapsed = time.monotonic() - start
    assert digests[0] == digests[1]
    assert elapsed < 60.0
    ok(f"end-to-end determinism: byte-identical double run in {elapsed:.1f}s for 50 questions")


def test_listwise_loss_contract():
    for k in (2, 3, 4, 8, 16):
        assert listwise_loss(0.7, [0.7] * k) == pytest.approx(math.log(k), abs=1e-9)
    expected = -math.log(math.exp(2.0) / (math.exp(2.0) + 2.0))
    assert listwise_loss(2.0, [2.0, 0.0, 0.0]) == pytest.approx(expected, abs=1e-9)
    ok("group loss: equal scores = ln k to 1e-9; hand-computed group reproduced")


def test_em_f1_normalization_contract():
    assert em("the Paris", "Paris") == 1
    assert em("X Y", "Y X") == 0 and token_f1("X Y", "Y X") == 1.0
    assert token_f1("X Y Z", "X Y") == pytest.approx(0.8, abs=1e-12)
    ok("EM/F1 normalization contract")
