"""Operator command line: one subcommand per pipeline stage.

Every subcommand takes --config, writes machine-readable outputs plus a
human summary, and exits 0 on success, 1 on partial results or validation
failures, 2 on configuration errors. All randomness flows from the seeds
in the config (or --seed overrides); repeated runs with scripted providers
are byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .bridge import BridgePipeline
from .comparison import ComparisonPipeline
from .config import ConfigError, RunConfig, load_config
from .constraints import validate_record
from .corpus import CorpusStore, ingest
from .providers import estimate_cost
from .quality.judge import (
    JudgeAssessment,
    aggregate_quality,
    diagnostic_qa,
    judge_dataset,
    reliability_report,
)
from .quality.retrieval_audit import retrieval_audit
from .records import read_dataset, write_dataset
from .retrieval import DenseIndex, SearchEngine, build_indexes, Bm25Index
from .triples import export_groups, forge

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_CONFIG = 2


def _dump_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _engine(cfg: RunConfig) -> SearchEngine:
    store = CorpusStore(cfg.store_path)
    embedder = cfg.embedding_provider()
    if (cfg.index_dir / "embeddings.npz").exists():
        dense = DenseIndex.load(cfg.index_dir)
        bm25 = Bm25Index(list(store.iter_documents()))
        return SearchEngine(store, bm25, dense, embedder)
    return build_indexes(store, embedder)


def cmd_ingest(cfg: RunConfig, args) -> int:
    manifest = ingest(args.source, cfg.store_path)
    _dump_json(cfg.output_dir / "ingest_manifest.json", manifest.to_dict())
    print(
        f"ingested {manifest.total_kept}/{manifest.total_read} documents "
        f"({manifest.total_dropped_oversize} oversize, {len(manifest.malformed)} malformed lines)"
    )
    return EXIT_PARTIAL if manifest.malformed else EXIT_OK


def cmd_index(cfg: RunConfig, args) -> int:
    store = CorpusStore(cfg.store_path)
    engine = build_indexes(store, cfg.embedding_provider())
    engine.dense.save(cfg.index_dir)
    meta = {
        "documents": len(store),
        "bm25_postings_checksum": engine.bm25.postings_checksum(),
        "embedding_dim": int(engine.dense.matrix.shape[1]),
    }
    _dump_json(cfg.index_dir / "meta.json", meta)
    print(f"indexed {len(store)} documents (dim {meta['embedding_dim']})")
    return EXIT_OK


def cmd_synth(cfg: RunConfig, args) -> int:
    engine = _engine(cfg)
    store = engine.store
    seed = args.seed if args.seed is not None else cfg.seed
    generator = cfg.chat_provider("generator", role="synthesis")
    polisher = cfg.chat_provider("polisher", role="synthesis")

    if args.qtype == "bridge":
        pipeline = BridgePipeline(
            store, engine, generator, polisher, cfg.rerank_provider(), params=cfg.mmr
        )
        budget = args.budget if args.budget is not None else cfg.budgets.get("bridge_attempts", 100)
        target = args.target if args.target is not None else cfg.targets.get("bridge") or None
        out_name = "bridge.jsonl"
    else:
        pipeline = ComparisonPipeline(
            store,
            engine,
            generator,
            cfg.chat_provider("filter", role="synthesis"),
            polisher,
            min_entity=cfg.min_entity,
            min_attr=cfg.min_attr,
        )
        budget = args.budget if args.budget is not None else cfg.budgets.get("comparison_attempts", 100)
        target = args.target if args.target is not None else cfg.targets.get("comparison") or None
        out_name = "comparison.jsonl"

    records, ledger = pipeline.run(seed=seed, budget=budget, target_successes=target)
    write_dataset(records, cfg.output_dir / out_name)
    _dump_json(cfg.output_dir / f"{args.qtype}_ledger.json", ledger.to_dict())
    cfg.usage.save(cfg.output_dir / f"usage_{args.qtype}.json")
    print(
        f"{args.qtype}: {ledger.successes} questions from {ledger.attempts} attempts "
        f"(avg attempts/success {ledger.avg_attempts_per_success():.2f})"
    )
    partial = ledger.successes == 0 or (target is not None and len(records) < target)
    return EXIT_PARTIAL if partial else EXIT_OK


def cmd_forge(cfg: RunConfig, args) -> int:
    engine = _engine(cfg)
    seed = args.seed if args.seed is not None else cfg.seed
    budget = args.budget if args.budget is not None else cfg.budgets.get("forge_sources", 100)
    groups = forge(
        engine.store, engine, cfg.chat_provider("generator", role="synthesis"),
        seed=seed, budget=budget, params=cfg.mmr,
    )
    manifest = export_groups(groups, engine.store, cfg.output_dir / "triples.jsonl")
    _dump_json(cfg.output_dir / "triples_manifest.json", manifest)
    print(f"forged {manifest['groups']} groups ({manifest['negatives']} negatives)")
    return EXIT_OK if groups else EXIT_PARTIAL


def cmd_validate(cfg: RunConfig, args) -> int:
    records = read_dataset(args.dataset)
    reports = []
    failures = 0
    warnings = 0
    for rec in records:
        report = validate_record(rec)
        reports.append({"id": rec.id, **report.to_dict()})
        failures += int(report.failed)
        warnings += len(report.warnings)
    _dump_json(cfg.output_dir / "validation.json", reports)
    print(f"validated {len(records)} records: {failures} failing, {warnings} warnings")
    return EXIT_PARTIAL if failures else EXIT_OK


def cmd_judge(cfg: RunConfig, args) -> int:
    records = read_dataset(args.dataset)
    providers = cfg.judge_providers()
    assessments, dropped = judge_dataset(
        records, providers, runs=args.runs, cache_off=True, parallelism=cfg.parallelism
    )
    out = cfg.output_dir / "assessments.jsonl"
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", encoding="utf-8") as fh:
        for a in assessments:
            fh.write(json.dumps(a.to_dict(), sort_keys=True) + "\n")
    cfg.usage.save(cfg.output_dir / "usage_judging.json")
    print(f"judged {len(records)} items x {len(providers)} judges x {args.runs} runs "
          f"({dropped} dropped runs)")
    return EXIT_PARTIAL if dropped else EXIT_OK


def _read_assessments(path: Path) -> list[JudgeAssessment]:
    out = []
    for line in path.read_text(encoding="utf-8").splitlines():
        if line.strip():
            out.append(JudgeAssessment.from_dict(json.loads(line)))
    return out


def cmd_report(cfg: RunConfig, args) -> int:
    assessments = _read_assessments(Path(args.assessments))
    quality = aggregate_quality(assessments, include_non_multihop=not args.exclude_non_multihop)
    _dump_json(cfg.output_dir / "quality_report.json", quality.to_dict())

    with (cfg.output_dir / "per_dimension.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["dimension", "mean"])
        for dim, mean in sorted(quality.per_dimension.items()):
            writer.writerow([dim, f"{mean:.4f}"])

    judges = sorted({a.judge_id for a in assessments})
    runs = sorted({a.run_index for a in assessments})
    reliability = []
    if len(runs) >= 2:
        for judge_id in judges:
            try:
                reliability.append(reliability_report(assessments, judge_id))
            except ValueError:
                pass
    if reliability:
        dims = sorted(reliability[0].per_dimension)
        for metric in ("avg_sd", "alpha", "kappa"):
            with (cfg.output_dir / f"reliability_{metric}.csv").open(
                "w", newline="", encoding="utf-8"
            ) as fh:
                writer = csv.writer(fh)
                writer.writerow(["judge"] + dims)
                for rep in reliability:
                    writer.writerow(
                        [rep.judge_id] + [f"{rep.per_dimension[d][metric]:.4f}" for d in dims]
                    )
        _dump_json(
            cfg.output_dir / "reliability.json", [r.to_dict() for r in reliability]
        )

    lines = [
        "question quality report",
        f"items          : {quality.n_items}",
        f"MultiHop%      : {quality.multi_hop_pct:.1f}",
        f"AvgScore       : {quality.avg_score:.2f}",
        "per-dimension means:",
    ]
    for dim, mean in sorted(quality.per_dimension.items()):
        lines.append(f"  {dim:<28} {mean:.2f}")
    summary = "\n".join(lines) + "\n"
    (cfg.output_dir / "quality_summary.txt").write_text(summary, encoding="utf-8")
    print(summary, end="")
    return EXIT_OK


def cmd_diagnose(cfg: RunConfig, args) -> int:
    records = read_dataset(args.dataset)
    results = []
    skipped = 0
    for name, solver in sorted(cfg.solver_providers().items()):
        for mode in ("QOnly", "QDocs"):
            result = diagnostic_qa(records, solver, name, mode, parallelism=cfg.parallelism)
            results.append(result.to_dict())
            skipped += result.skipped
    _dump_json(cfg.output_dir / "diagnostics.json", results)
    cfg.usage.save(cfg.output_dir / "usage_diagnostic.json")
    for r in results:
        print(f"{r['model_id']:<20} {r['mode']:<6} EM {r['em']:.3f}  F1 {r['f1']:.3f}  (n={r['n']})")
    return EXIT_PARTIAL if skipped else EXIT_OK


def cmd_audit(cfg: RunConfig, args) -> int:
    records = read_dataset(args.dataset)
    engine = _engine(cfg)
    ks = [int(k) for k in args.ks.split(",")]

    def bm25_retriever(query: str, depth: int):
        return engine.search_bm25(query, depth).ids()

    def dense_retriever(query: str, depth: int):
        return engine.search_dense(query, depth).ids()

    retrievers = {"bm25": bm25_retriever, "dense": dense_retriever}
    if args.method != "all":
        retrievers = {args.method: retrievers[args.method]}

    audits = [
        retrieval_audit(records, fn, ks=ks, method_id=name).to_dict()
        for name, fn in sorted(retrievers.items())
    ]
    _dump_json(cfg.output_dir / "retrieval_audit.json", audits)
    for a in audits:
        recalls = "  ".join(f"R@{k} {v:.3f}" for k, v in a["recall_at"].items())
        print(f"{a['method_id']:<8} MAP {a['map']:.4f}  {recalls}  SupportF1 {a['support_f1']:.4f}")
    return EXIT_OK


def cmd_cost(cfg: RunConfig, args) -> int:
    usage_files = sorted(Path(args.usage_dir or cfg.output_dir).glob("usage*.json"))
    if not usage_files:
        print("no usage files found", file=sys.stderr)
        return EXIT_PARTIAL
    price_in = args.price_in
    price_out = args.price_out
    total = 0.0
    rows = []
    for path in usage_files:
        data = json.loads(path.read_text(encoding="utf-8"))
        for role, rec in sorted(data.items()):
            cost = estimate_cost(
                rec["request_count"], rec["input_tokens"], rec["output_tokens"], price_in, price_out
            )
            total += cost
            rows.append(
                {
                    "file": path.name,
                    "role": role,
                    "requests": rec["request_count"],
                    "input_tokens": rec["input_tokens"],
                    "output_tokens": rec["output_tokens"],
                    "estimated_counts": rec["estimated"],
                    "cost_usd": cost,
                }
            )
    _dump_json(cfg.output_dir / "cost_report.json", {"rows": rows, "total_usd": total})
    for row in rows:
        if row["requests"]:
            print(
                f"{row['role']:<12} {row['requests']:>8} req  "
                f"{row['input_tokens']:>12} in  {row['output_tokens']:>12} out  "
                f"${row['cost_usd']:.2f}"
            )
    print(f"total ${total:.2f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hopsynth")
    parser.add_argument("--config", required=True, help="path to the YAML run config")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="ingest a JSONL corpus into the document store")
    p.add_argument("source")
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("index", help="build and persist the search indexes")
    p.set_defaults(fn=cmd_index)

    p = sub.add_parser("synth", help="synthesize questions")
    synth_sub = p.add_subparsers(dest="qtype", required=True)
    for qtype in ("bridge", "compare"):
        q = synth_sub.add_parser(qtype)
        q.add_argument("--budget", type=int, default=None)
        q.add_argument("--target", type=int, default=None)
        q.add_argument("--seed", type=int, default=None)
        q.set_defaults(fn=cmd_synth, qtype="bridge" if qtype == "bridge" else "comparison")

    p = sub.add_parser("forge-triples", help="generate contrastive training groups")
    p.add_argument("--budget", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=cmd_forge)

    p = sub.add_parser("validate", help="run structural checks over a dataset file")
    p.add_argument("dataset")
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("judge", help="score a dataset with the judge providers")
    p.add_argument("dataset")
    p.add_argument("--runs", type=int, default=5)
    p.set_defaults(fn=cmd_judge)

    p = sub.add_parser("report", help="aggregate judge assessments into reports")
    p.add_argument("assessments")
    p.add_argument("--exclude-non-multihop", action="store_true")
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("diagnose", help="run Q-Only / Q+Docs solver diagnostics")
    p.add_argument("dataset")
    p.set_defaults(fn=cmd_diagnose)

    p = sub.add_parser("audit-retrieval", help="audit evidence accessibility")
    p.add_argument("dataset")
    p.add_argument("--method", choices=["bm25", "dense", "all"], default="all")
    p.add_argument("--ks", default="5,10,20")
    p.set_defaults(fn=cmd_audit)

    p = sub.add_parser("cost", help="estimate dollar cost from usage records")
    p.add_argument("--usage-dir", default=None)
    p.add_argument("--price-in", type=float, required=True, help="USD per million input tokens")
    p.add_argument("--price-out", type=float, required=True, help="USD per million output tokens")
    p.set_defaults(fn=cmd_cost)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.fn(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
