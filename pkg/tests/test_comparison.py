import json

import pytest

from hopsynth.comparison import (
    BuildFailed,
    ComparisonPipeline,
    EntityProfile,
    ProfileRejected,
    QueryPlan,
    build_comparison,
    extract_profile,
    plan_queries,
    retrieve_candidates,
    score_and_filter,
)
from hopsynth.corpus import Document
from hopsynth.parsing import MalformedOutput
from hopsynth.providers import ScriptedChatProvider
from hopsynth.retrieval import RankedList

from scripted_world import ComparisonWorld, build_world_engine, build_world_store

DOC_A = Document.from_fields("w000", "Entry w000", "body text tok_w000 with shared words")
DOC_B = Document.from_fields("w001", "Entry w001", "body text tok_w001 with shared words")


def make_pipeline(tmp_path, world: ComparisonWorld, n_docs=8, **kwargs) -> ComparisonPipeline:
    store = build_world_store(tmp_path, n_docs=n_docs)
    return ComparisonPipeline(
        store,
        build_world_engine(store),
        world.generator(),
        world.filter_provider(),
        world.polisher(),
        **kwargs,
    )


# --- extract_profile ---


def test_extract_profile_happy_path():
    profile = extract_profile(DOC_A, ComparisonWorld().generator())
    assert profile.name == "subject_w000"
    assert [a[0] for a in profile.attributes] == ["size", "year"]
    assert profile.source_doc == "w000"


def test_extract_profile_missing_subject():
    provider = ScriptedChatProvider(default='("attribute"<|>"a"<|>"v"<|>"q")<|COMPLETE|>')
    with pytest.raises(MalformedOutput, match="subject_entity"):
        extract_profile(DOC_A, provider)


def test_extract_profile_drops_empty_values():
    provider = ScriptedChatProvider(
        default='("subject_entity"<|>"S"<|>"t") ## ("attribute"<|>"good"<|>"v"<|>"q") ## '
        '("attribute"<|>"empty"<|>""<|>"q")<|COMPLETE|>'
    )
    profile = extract_profile(DOC_A, provider)
    assert [a[0] for a in profile.attributes] == ["good"]


# --- score_and_filter ---


def profile_fixture():
    return EntityProfile(
        name="subject_w000",
        etype="thing",
        attributes=[("size", "ten units w000", "q1"), ("year", "nineteen w000", "q2")],
        source_doc="w000",
    )


def test_filter_thresholds_five_four():
    provider = ScriptedChatProvider(
        default='("entity_score"<|>5) ## ("attribute_score"<|>"size"<|>"v"<|>5) ## '
        '("attribute_score"<|>"year"<|>"v"<|>4) ## ("attribute_score"<|>"extra"<|>"v"<|>3)<|COMPLETE|>'
    )
    profile = EntityProfile(
        name="s", etype="t",
        attributes=[("size", "v", ""), ("year", "v", ""), ("extra", "v", "")],
        source_doc="w000",
    )
    got = score_and_filter(profile, provider)
    assert [a[0] for a in got.attributes] == ["size", "year"]
    assert got.concreteness == 5
    assert got.comparability == {"size": 5, "year": 4}


def test_filter_entity_below_threshold_rejected():
    provider = ScriptedChatProvider(
        default='("entity_score"<|>4) ## ("attribute_score"<|>"size"<|>"v"<|>5)<|COMPLETE|>'
    )
    got = score_and_filter(profile_fixture(), provider)
    assert isinstance(got, ProfileRejected)


def test_filter_no_surviving_attributes_rejected():
    provider = ScriptedChatProvider(
        default='("entity_score"<|>5) ## ("attribute_score"<|>"size"<|>"v"<|>3) ## '
        '("attribute_score"<|>"year"<|>"v"<|>3)<|COMPLETE|>'
    )
    got = score_and_filter(profile_fixture(), provider)
    assert isinstance(got, ProfileRejected)


def test_filter_score_out_of_range_malformed():
    provider = ScriptedChatProvider(default='("entity_score"<|>6)<|COMPLETE|>')
    with pytest.raises(MalformedOutput, match="out of range"):
        score_and_filter(profile_fixture(), provider)


def test_filter_monotone_in_min_attr():
    provider = ScriptedChatProvider(
        default='("entity_score"<|>5) ## ("attribute_score"<|>"size"<|>"v"<|>5) ## '
        '("attribute_score"<|>"year"<|>"v"<|>4)<|COMPLETE|>'
    )
    survivors = []
    for min_attr in (1, 2, 3, 4, 5):
        got = score_and_filter(profile_fixture(), provider, min_attr=min_attr)
        survivors.append(0 if isinstance(got, ProfileRejected) else len(got.attributes))
    assert survivors == sorted(survivors, reverse=True)


# --- plan_queries ---


def test_plan_recall_path():
    provider = ScriptedChatProvider(
        default='("recall_focused_verify"<|>B<|>Attr<|>Q)<|COMPLETE|>'
    )
    plan = plan_queries(profile_fixture(), provider)
    assert plan.path == "recall_focused_verify"
    assert plan.queries == ["Q"]
    assert (plan.entity_b_hint, plan.attribute_hint) == ("B", "Attr")


def test_plan_search_path():
    provider = ScriptedChatProvider(default='("search_queries"<|>q1<|>q2<|>q3)<|COMPLETE|>')
    plan = plan_queries(profile_fixture(), provider)
    assert plan.path == "search_queries"
    assert plan.queries == ["q1", "q2", "q3"]
    assert plan.entity_b_hint is None


def test_plan_wrong_arity_malformed():
    provider = ScriptedChatProvider(default='("search_queries"<|>q1<|>q2)<|COMPLETE|>')
    with pytest.raises(MalformedOutput):
        plan_queries(profile_fixture(), provider)


def test_plan_both_paths_malformed():
    provider = ScriptedChatProvider(
        default='("recall_focused_verify"<|>B<|>A<|>Q) ## ("search_queries"<|>a<|>b<|>c)<|COMPLETE|>'
    )
    with pytest.raises(MalformedOutput, match="exactly one"):
        plan_queries(profile_fixture(), provider)


def test_queryplan_invariants():
    with pytest.raises(MalformedOutput):
        QueryPlan(path="recall_focused_verify", queries=["a", "b"], entity_b_hint="e", attribute_hint="a")
    with pytest.raises(MalformedOutput):
        QueryPlan(path="search_queries", queries=["a", "b", "c"], entity_b_hint="e")


# --- retrieve_candidates merge rule ---


class StubEngine:
    def __init__(self, rankings, store):
        self.rankings = rankings
        self.store = store

    def search_dense(self, query, k, exclude=None):
        exclude = exclude or set()
        ids = [d for d in self.rankings[query] if d not in exclude][:k]
        return RankedList(query=query, entries=[(d, 1.0 - i * 0.1) for i, d in enumerate(ids)])


class StubStore:
    def get(self, doc_id):
        return Document.from_fields(doc_id, f"T {doc_id}", "text")


def merge_oracle(rankings, queries, k, exclude):
    best = {}
    for q in queries:
        rank = 0
        for d in rankings[q]:
            if d in exclude:
                continue
            if rank >= k:
                break
            if d not in best or rank < best[d]:
                best[d] = rank
            rank += 1
    return sorted(best, key=lambda d: (best[d], d))


def test_retrieve_candidates_identical_queries_dedup():
    rankings = {"q": ["a", "b", "c"]}
    plan = QueryPlan(path="search_queries", queries=["q", "q", "q"])
    # identical queries collapse to at most k unique docs
    got = retrieve_candidates(plan, StubEngine(rankings, StubStore()), k=2)
    assert [d.id for d in got] == ["a", "b"]


def test_retrieve_candidates_disjoint_union():
    rankings = {"q1": ["a", "b"], "q2": ["c", "d"], "q3": ["e", "f"]}
    plan = QueryPlan(path="search_queries", queries=["q1", "q2", "q3"])
    got = retrieve_candidates(plan, StubEngine(rankings, StubStore()), k=2)
    assert len(got) == 6  # 3k for disjoint result sets


def test_retrieve_candidates_merge_matches_oracle():
    rankings = {
        "q1": ["a", "b", "c", "d"],
        "q2": ["c", "a", "e", "f"],
        "q3": ["f", "f2", "b", "a"],
    }
    queries = ["q1", "q2", "q3"]
    plan = QueryPlan(path="search_queries", queries=queries)
    got = retrieve_candidates(plan, StubEngine(rankings, StubStore()), k=3, exclude={"a"})
    assert [d.id for d in got] == merge_oracle(rankings, queries, 3, {"a"})


# --- build_comparison ---


def filtered_profile():
    return EntityProfile(
        name="subject_w000",
        etype="thing",
        attributes=[("size", "ten units w000", "q")],
        concreteness=5,
        comparability={"size": 5},
        source_doc="w000",
    )


def search_plan():
    return QueryPlan(path="search_queries", queries=["a", "b", "c"])


def test_build_comparison_pass():
    got = build_comparison(
        filtered_profile(), DOC_B, search_plan(), DOC_A, ComparisonWorld().generator(), "c-1"
    )
    assert not isinstance(got, BuildFailed)
    core, record = got
    assert core.doc_a == "w000" and core.doc_b == "w001"
    assert core.entity_b == "subject_w001"
    assert record.evidence[0][0] == "w000"
    assert core.fact_a in core.paragraph_a


def test_build_comparison_fail_moves_on():
    world = ComparisonWorld(builder_fail={"w000"})
    got = build_comparison(filtered_profile(), DOC_B, search_plan(), DOC_A, world.generator(), "c")
    assert isinstance(got, BuildFailed)


def test_build_comparison_fact_substring_enforced():
    base = ComparisonWorld().generator().fn

    def tamper(prompt):
        out = base(prompt)
        if out and out.startswith("PASS"):
            out = out.replace(
                "fact_entity_a: subject_w000 has size ten units w000.",
                "fact_entity_a: a sentence that appears nowhere.",
            )
        return out

    got = build_comparison(filtered_profile(), DOC_B, search_plan(), DOC_A,
                           ScriptedChatProvider(fn=tamper), "c")
    assert isinstance(got, BuildFailed)
    assert "substring" in got.reason


def test_build_comparison_guided_mode_enforces_hints():
    plan = QueryPlan(
        path="recall_focused_verify",
        queries=["verify"],
        entity_b_hint="subject_w001",
        attribute_hint="size",
    )
    got = build_comparison(filtered_profile(), DOC_B, plan, DOC_A, ComparisonWorld().generator(), "c")
    assert not isinstance(got, BuildFailed)

    wrong_entity = QueryPlan(
        path="recall_focused_verify",
        queries=["verify"],
        entity_b_hint="subject_w999",
        attribute_hint="size",
    )
    got = build_comparison(filtered_profile(), DOC_B, wrong_entity, DOC_A,
                           ComparisonWorld().generator(), "c")
    assert isinstance(got, BuildFailed)
    assert "guided" in got.reason


def test_build_comparison_attribute_outside_profile_rejected():
    profile = filtered_profile()
    profile.attributes = [("weight", "heavy", "q")]
    got = build_comparison(profile, DOC_B, search_plan(), DOC_A, ComparisonWorld().generator(), "c")
    assert isinstance(got, BuildFailed)
    assert "not in the filtered profile" in got.reason


# --- run_comparison ---


def test_run_all_pass_no_rejections(tmp_path):
    pipeline = make_pipeline(tmp_path, ComparisonWorld())
    records, ledger = pipeline.run(seed=5, budget=4)
    assert ledger.successes == len(records) == 4
    assert all(v == 0 for v in ledger.counters.values())
    for rec in records:
        assert rec.sub_parts.doc_a != rec.sub_parts.doc_b
        assert len(rec.evidence) == 2


def test_run_ledger_matches_schedule(tmp_path):
    store = build_world_store(tmp_path, n_docs=10)
    ids = store.ids()
    world = ComparisonWorld(
        filter_reject=set(ids[:2]),
        builder_fail={ids[2]},
        polish_reject={ids[3]},
        extraction_malformed={ids[4]},
    )
    pipeline = ComparisonPipeline(
        store, build_world_engine(store), world.generator(),
        world.filter_provider(), world.polisher(),
    )
    records, ledger = pipeline.run(seed=2, budget=10)
    assert ledger.attempts == 10
    assert ledger.counters["filter"] == 2
    assert ledger.counters["construction"] == 1
    assert ledger.counters["polisher_reject"] == 1
    assert ledger.counters["extraction_malformed"] == 1
    assert ledger.successes == 5
    assert ledger.successes + sum(ledger.counters.values()) == ledger.attempts


def test_run_deterministic(tmp_path):
    a, _ = make_pipeline(tmp_path, ComparisonWorld()).run(seed=9, budget=5)
    b, _ = make_pipeline(tmp_path, ComparisonWorld()).run(seed=9, budget=5)
    dump = lambda recs: json.dumps([r.to_dict() for r in recs], sort_keys=True)
    assert dump(a) == dump(b)


def test_run_emitted_records_disjoint_sources(tmp_path):
    pipeline = make_pipeline(tmp_path, ComparisonWorld())
    records, _ = pipeline.run(seed=4, budget=6)
    assert records
    for rec in records:
        assert rec.sub_parts.doc_a != rec.sub_parts.doc_b
        ids = rec.evidence_doc_ids()
        assert len(set(ids)) == 2
