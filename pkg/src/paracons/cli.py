"""Command-line pipeline: curate -> evaluate -> analyze / intervene.

Exit codes: 0 success, 2 validation/configuration, 3 transport, 4 protocol,
5 cache/dataset digest mismatch.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from . import cache as cache_mod
from . import corpus, flags_data, metrics, retrieval
from .endpoints import make_endpoint
from .errors import DigestMismatchError, HarnessError, ValidationError
from .manifest import RunManifest, atomic_write_text, write_json
from .protocol import Prediction, check_free_agreement
from .reports import Cell, Table, tables_to_json
from .runner import run_scorer

INTERVENTION_ROW_ORDER = ("none", "relevant", "irr cohesive", "irr incohesive")


def _parse_formats(raw: str) -> set[str]:
    formats = {f.strip() for f in raw.split(",") if f.strip()}
    unknown = formats - {"text", "json", "csv"}
    if unknown:
        raise ValidationError(f"unknown report format(s): {sorted(unknown)}")
    return formats or {"text", "json"}


def _write_tables(tables: list[Table], out_dir: Path, formats: set[str], manifest: RunManifest) -> None:
    provenance = {
        "dataset_digest": manifest.dataset_digest,
        "endpoint": manifest.endpoint,
        "seed": manifest.seed,
    }
    if "text" in formats:
        path = out_dir / "report.txt"
        header = (
            f"endpoint: {manifest.endpoint}\nseed: {manifest.seed}\n"
            f"dataset digest: {manifest.dataset_digest}\n\n"
        )
        atomic_write_text(path, header + "\n".join(t.render_text() for t in tables))
        manifest.record_artifact(path, out_dir)
    if "json" in formats:
        path = out_dir / "report.json"
        atomic_write_text(path, tables_to_json(tables, provenance) + "\n")
        manifest.record_artifact(path, out_dir)
    if "csv" in formats:
        csv_dir = out_dir / "csv"
        csv_dir.mkdir(parents=True, exist_ok=True)
        for t in tables:
            path = csv_dir / f"{t.name}.csv"
            atomic_write_text(path, t.render_csv())
            manifest.record_artifact(path, out_dir)


def _ordered_predictions(dataset: corpus.Dataset, preds: dict) -> list[Prediction]:
    out = []
    for rel in dataset.relations:
        for t in rel.tuples:
            for idx in range(len(rel.spec.templates)):
                pred = preds.get((rel.relation_id, t.subject, idx))
                if pred is not None:
                    out.append(pred)
    return out


def _load_cache_for(dataset: corpus.Dataset, cache_path: Path) -> tuple[cache_mod.CacheHeader, list[Prediction]]:
    header, preds = cache_mod.read_cache(cache_path)
    if header.dataset_digest != dataset.digest():
        raise DigestMismatchError(
            f"{cache_path}: cache was produced for a different dataset "
            f"(cache digest {header.dataset_digest[:12]}..., dataset {dataset.digest()[:12]}...)"
        )
    return header, _ordered_predictions(dataset, preds)


def _summary_tables(dataset, summary, label: str) -> list[Table]:
    cons = Table(
        name="consistency_summary",
        title="Consistency / Accuracy / Consistent&Accurate",
        columns=["Cons", "Acc", "C & A"],
    )
    know = Table(
        name="knowledge_consistency",
        title="Knowledgeable consistency split",
        columns=["Know Cons", "K-know Cons", "Unk Cons"],
    )
    for row in summary.per_relation:
        cons.add_row(
            row.relation_id,
            [
                Cell.value(row.consistency),
                Cell.value(row.accuracy),
                Cell.value(row.consistent_and_accurate),
            ],
        )
        know.add_row(
            row.relation_id,
            [Cell.value(row.know_cons), Cell.value(row.k_know_cons), Cell.value(row.unk_cons)],
        )
    cons.add_row(
        label,
        [
            Cell.from_stat(summary.macro_of("consistency")),
            Cell.from_stat(summary.macro_of("accuracy")),
            Cell.from_stat(summary.macro_of("consistent_and_accurate")),
        ],
    )
    know.add_row(
        label,
        [
            Cell.from_stat(summary.macro_of("know_cons")),
            Cell.from_stat(summary.macro_of("k_know_cons")),
            Cell.from_stat(summary.macro_of("unk_cons")),
        ],
    )
    return [cons, know]


def _strat_tables(strat: dict[str, metrics.StratTable]) -> list[Table]:
    tables = []
    for name, table in strat.items():
        columns = list(table.strata)
        t = Table(name=f"strat_{name}", title=f"Consistency stratified by {name}", columns=columns)
        for rid in table.relation_ids:
            cells = [Cell.value(table.strata[s].per_relation.get(rid)) for s in columns]
            if all(c.mean is None for c in cells):
                continue
            t.add_row(rid, cells)
        t.add_row("macro", [Cell.from_stat(table.strata[s].stat) for s in columns])
        if table.fallback_all_relations:
            t.notes.append("no relation carries this flag; split computed over all relations")
        tables.append(t)
    return tables


def _figure_points_csv(strat: dict[str, metrics.StratTable], model: str) -> str:
    lines = ["model,stratum_group,stratum,mean,std,n_relations"]
    for name, table in strat.items():
        for stratum, cell in table.strata.items():
            stat = cell.stat
            mean = "" if stat.mean is None else repr(stat.mean)
            std = "" if stat.std is None else repr(stat.std)
            lines.append(f"{model},{name},{stratum},{mean},{std},{stat.n}")
    return "\n".join(lines) + "\n"


def _similarity_table(cells_by_source: dict[str, dict[str, retrieval.SimilarityCell]]) -> Table:
    t = Table(
        name="retriever_similarity",
        title="Retriever agreement (per-relation mean and std distributions)",
        columns=["Similarity mu", "Similarity sigma"],
    )
    for source, cells in cells_by_source.items():
        for label, _ in retrieval.METRIC_ATTRS:
            cell = cells[label]
            t.add_row(f"{source}/{label}", [Cell.from_stat(cell.mu), Cell.from_stat(cell.sigma)])
    return t


def _match_table(match_cells: dict[str, dict[str, metrics.MacroStat]]) -> Table:
    t = Table(
        name="retriever_match_split",
        title="Retriever agreement by prediction match",
        columns=["Match sim.", "No match sim."],
    )
    for label, cells in match_cells.items():
        t.add_row(label, [Cell.from_stat(cells["match"]), Cell.from_stat(cells["no_match"])])
    return t


def _correlation_table(matrix: dict[str, dict[str, metrics.MacroStat]]) -> Table:
    labels = list(matrix)
    t = Table(
        name="retriever_metric_correlations",
        title="Correlations between retriever agreement metrics (r-all samples)",
        columns=labels,
    )
    for a in labels:
        t.add_row(a, [Cell.from_stat(matrix[a][b]) for b in labels])
    return t


def _rank_tables(report: retrieval.RankReport) -> list[Table]:
    t = Table(
        name="frequency_rank",
        title="Frequency-based rank of prediction and gold in retrieved passages",
        columns=["Rank", "Match", "No match"],
    )
    for label in ("pred", "gold"):
        cells = report.cells.get(label)
        if cells is None:
            continue
        t.add_row(
            label,
            [Cell.from_stat(cells["rank"]), Cell.from_stat(cells["match"]), Cell.from_stat(cells["no_match"])],
        )
    c = Table(
        name="frequency_rank_correlations",
        title="Pearson between pair agreement and mean rank",
        columns=["pearson"],
    )
    for label in ("pred", "gold"):
        stat = report.correlations.get(label)
        if stat is not None:
            c.add_row(label, [Cell.from_stat(stat)])
    return [t, c]


# -- commands -----------------------------------------------------------------


def cmd_curate(args) -> int:
    t0 = time.perf_counter()
    dataset = corpus.load_dataset(args.data)
    if args.apply_reference_flags:
        dataset = flags_data.apply_reference_flags(dataset)
    curated, report = corpus.deduplicate(dataset, drop_threshold=args.drop_threshold)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(
        command="curate",
        config={
            "data": str(args.data),
            "out": str(args.out),
            "drop_threshold": args.drop_threshold,
            "apply_reference_flags": args.apply_reference_flags,
        },
        dataset_digest=curated.digest(),
    )
    for path in corpus.save_dataset(curated, out_dir):
        manifest.record_artifact(path, out_dir)
    write_json(out_dir / "curation_report.json", report.to_dict())
    manifest.record_artifact(out_dir / "curation_report.json", out_dir)
    lines = [
        f"relations in: {report.relations_in}  retained: {report.relations_retained}",
        f"tuples in: {report.tuples_in}  retained: {report.tuples_retained}  removed: {report.tuples_removed}",
        "",
        "relation  entries  duplicates  exact  retained  dropped",
    ]
    for row in report.rows:
        lines.append(
            f"{row.relation_id:<9} {row.entries:>7} {row.duplicates:>11} "
            f"{row.exact_duplicates:>6} {row.retained:>9}  {'yes' if row.dropped else 'no'}"
        )
    atomic_write_text(out_dir / "curation_report.txt", "\n".join(lines) + "\n")
    manifest.record_artifact(out_dir / "curation_report.txt", out_dir)
    manifest.timings["total"] = time.perf_counter() - t0
    manifest.save(out_dir / "manifest.json")
    print(
        f"curated {report.relations_retained}/{report.relations_in} relations, "
        f"{report.tuples_retained} tuples -> {out_dir}"
    )
    return 0


def cmd_evaluate(args) -> int:
    t0 = time.perf_counter()
    dataset = corpus.load_dataset(args.data)
    endpoint = make_endpoint(args.endpoint, args.seed)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    cache_path = out_dir / "cache.jsonl"
    try:
        predictions = run_scorer(
            dataset,
            endpoint,
            cache_path,
            seed=args.seed,
            n_passages=args.n_passages,
            want_retrieval=not args.no_retrieval,
            batch_size=args.batch_size,
            max_in_flight=args.max_in_flight,
        )
    finally:
        endpoint.close()
    manifest = RunManifest(
        command="evaluate",
        config={
            "data": str(args.data),
            "endpoint": args.endpoint,
            "seed": args.seed,
            "n_passages": args.n_passages,
            "batch_size": args.batch_size,
            "max_in_flight": args.max_in_flight,
            "retrieval": not args.no_retrieval,
        },
        dataset_digest=dataset.digest(),
        endpoint=endpoint.identity,
        seed=args.seed,
    )
    manifest.record_artifact(cache_path, out_dir)
    manifest.timings["total"] = time.perf_counter() - t0
    manifest.save(out_dir / "manifest.json")
    print(f"scored {len(predictions)} queries -> {cache_path}")
    return 0


def cmd_analyze(args) -> int:
    t0 = time.perf_counter()
    dataset = corpus.load_dataset(args.data)
    header, predictions = _load_cache_for(dataset, Path(args.cache))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    formats = _parse_formats(args.format)

    pair_set = metrics.build_pair_set(dataset, predictions)
    summary = metrics.evaluate(dataset, predictions, pair_set)
    strat = metrics.stratified_consistency(dataset, pair_set)
    tables = _summary_tables(dataset, summary, label="macro")
    tables += _strat_tables(strat)

    agreement = check_free_agreement(
        predictions, {rel.relation_id: rel.spec.candidates for rel in dataset.relations}
    )
    free_table = Table(
        name="free_agreement",
        title="Free-vs-constrained agreement",
        columns=["agreement", "eligible", "with free output"],
    )
    free_table.add_row(
        header.endpoint,
        [
            Cell.value(agreement.value),
            Cell(text=str(agreement.n_eligible)),
            Cell(text=str(agreement.n_with_free)),
        ],
    )
    tables.append(free_table)

    has_retrieval = any(p.passages for p in predictions)
    if has_retrieval:
        retrieval.annotate_retrieval(pair_set, predictions)
        retrieval.annotate_ranks(pair_set, predictions, dataset)
        r_all = retrieval.random_baseline(predictions, "r_all", args.baseline_samples, args.seed)
        r_subject = retrieval.random_baseline(
            predictions, "r_subject", args.baseline_samples, args.seed
        )
        cells_by_source = {
            "r-all": retrieval.similarity_summary(r_all.per_relation),
            "r-subject": retrieval.similarity_summary(r_subject.per_relation),
            header.endpoint: retrieval.similarity_summary(
                retrieval.pair_metrics_by_relation(pair_set)
            ),
        }
        tables.append(_similarity_table(cells_by_source))
        tables.append(_match_table(retrieval.match_stratified_summary(pair_set)))
        tables.append(_correlation_table(retrieval.metric_correlation_matrix(r_all)))
        tables += _rank_tables(retrieval.rank_consistency_report(pair_set))
    else:
        note = Table(
            name="retrieval_tables",
            title="Retrieval analysis",
            columns=["status"],
        )
        note.add_row("all", [Cell(text="absent: cache carries no retrieval data")])
        tables.append(note)

    manifest = RunManifest(
        command="analyze",
        config={
            "data": str(args.data),
            "cache": str(args.cache),
            "format": sorted(formats),
            "baseline_samples": args.baseline_samples,
            "seed": args.seed,
        },
        dataset_digest=dataset.digest(),
        endpoint=header.endpoint,
        seed=header.seed,
    )
    _write_tables(tables, out_dir, formats, manifest)

    points = _figure_points_csv(strat, header.endpoint)
    atomic_write_text(out_dir / "stratified_points.csv", points)
    manifest.record_artifact(out_dir / "stratified_points.csv", out_dir)

    diagnostics = {
        rid: {
            "tuples_seen": d.tuples_seen,
            "tuples_included": d.tuples_included,
            "tuples_excluded": d.tuples_excluded,
            "tuples_incomplete": d.tuples_incomplete,
            "missing_lama": d.missing_lama,
        }
        for rid, d in pair_set.diagnostics.items()
    }
    write_json(out_dir / "diagnostics.json", diagnostics)
    manifest.record_artifact(out_dir / "diagnostics.json", out_dir)
    manifest.timings["total"] = time.perf_counter() - t0
    manifest.save(out_dir / "manifest.json")

    stat = summary.macro_of("consistency")
    shown = "n/a" if stat.mean is None else f"{stat.mean:.2f}"
    print(f"analyzed {len(predictions)} predictions (macro consistency {shown}) -> {out_dir}")
    return 0


def cmd_intervene(args) -> int:
    t0 = time.perf_counter()
    dataset = corpus.load_dataset(args.data)
    header, baseline_preds = _load_cache_for(dataset, Path(args.cache))
    if not any(p.passages for p in baseline_preds):
        raise ValidationError("baseline cache carries no passages; run evaluate with retrieval")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    formats = _parse_formats(args.format)
    modes = list(retrieval.INTERVENTION_MODES) if args.mode == "all" else [args.mode]

    endpoint = make_endpoint(args.endpoint, args.seed)
    manifest = RunManifest(
        command="intervene",
        config={
            "data": str(args.data),
            "cache": str(args.cache),
            "endpoint": args.endpoint,
            "mode": args.mode,
            "seed": args.seed,
            "n_passages": header.n_passages,
        },
        dataset_digest=dataset.digest(),
        endpoint=endpoint.identity,
        seed=args.seed,
    )

    rows: dict[str, metrics.EvaluationSummary] = {
        "none": metrics.evaluate(dataset, baseline_preds)
    }
    try:
        for mode in modes:
            plan = retrieval.plan_intervention(
                dataset, baseline_preds, mode, args.seed, header.n_passages
            )
            plan_path = out_dir / f"plan_{mode}.jsonl"
            plan.save(plan_path)
            manifest.record_artifact(plan_path, out_dir)
            cache_path = out_dir / f"cache_{mode}.jsonl"
            preds = retrieval.run_intervention(
                dataset,
                plan,
                endpoint,
                cache_path,
                seed=args.seed,
                batch_size=args.batch_size,
                max_in_flight=args.max_in_flight,
            )
            manifest.record_artifact(cache_path, out_dir)
            rows[mode.replace("irr_", "irr ")] = metrics.evaluate(dataset, preds)
    finally:
        endpoint.close()

    table = Table(
        name="intervention_summary",
        title="Consistency under retrieval interventions",
        columns=["Cons", "Acc", "C & A"],
    )
    for label in INTERVENTION_ROW_ORDER:
        if label not in rows:
            continue
        summary = rows[label]
        table.add_row(
            label,
            [
                Cell.from_stat(summary.macro_of("consistency")),
                Cell.from_stat(summary.macro_of("accuracy")),
                Cell.from_stat(summary.macro_of("consistent_and_accurate")),
            ],
        )
    _write_tables([table], out_dir, formats, manifest)
    manifest.timings["total"] = time.perf_counter() - t0
    manifest.save(out_dir / "manifest.json")
    print(f"interventions {', '.join(modes)} -> {out_dir}")
    return 0


def cmd_retriever_metrics(args) -> int:
    dataset = corpus.load_dataset(args.data)
    header, predictions = _load_cache_for(dataset, Path(args.cache))
    if not any(p.passages for p in predictions):
        raise ValidationError("cache carries no retrieval data")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    formats = _parse_formats(args.format)
    pair_set = metrics.build_pair_set(dataset, predictions)
    retrieval.annotate_retrieval(pair_set, predictions)
    r_all = retrieval.random_baseline(predictions, "r_all", args.baseline_samples, args.seed)
    r_subject = retrieval.random_baseline(predictions, "r_subject", args.baseline_samples, args.seed)
    tables = [
        _similarity_table(
            {
                "r-all": retrieval.similarity_summary(r_all.per_relation),
                "r-subject": retrieval.similarity_summary(r_subject.per_relation),
                header.endpoint: retrieval.similarity_summary(
                    retrieval.pair_metrics_by_relation(pair_set)
                ),
            }
        ),
        _match_table(retrieval.match_stratified_summary(pair_set)),
        _correlation_table(retrieval.metric_correlation_matrix(r_all)),
    ]
    manifest = RunManifest(
        command="retriever-metrics",
        config={"data": str(args.data), "cache": str(args.cache), "seed": args.seed},
        dataset_digest=dataset.digest(),
        endpoint=header.endpoint,
        seed=header.seed,
    )
    _write_tables(tables, out_dir, formats, manifest)
    manifest.save(out_dir / "manifest.json")
    print(f"retriever metrics -> {out_dir}")
    return 0


def cmd_rank_report(args) -> int:
    dataset = corpus.load_dataset(args.data)
    header, predictions = _load_cache_for(dataset, Path(args.cache))
    if not any(p.passages for p in predictions):
        raise ValidationError("cache carries no retrieval data")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    formats = _parse_formats(args.format)
    pair_set = metrics.build_pair_set(dataset, predictions)
    retrieval.annotate_ranks(pair_set, predictions, dataset)
    tables = _rank_tables(retrieval.rank_consistency_report(pair_set))
    manifest = RunManifest(
        command="rank-report",
        config={"data": str(args.data), "cache": str(args.cache)},
        dataset_digest=dataset.digest(),
        endpoint=header.endpoint,
        seed=header.seed,
    )
    _write_tables(tables, out_dir, formats, manifest)
    manifest.save(out_dir / "manifest.json")
    print(f"rank report -> {out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="paracons",
        description="Measure factual consistency of language models on paraphrased cloze queries.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common_out(p):
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--format", default="text,json", help="comma list of text,json,csv")

    p = sub.add_parser("curate", help="validate and deduplicate a dataset")
    p.add_argument("--data", required=True, help="directory of relation JSONL files")
    p.add_argument("--drop-threshold", type=float, default=corpus.DEFAULT_DROP_THRESHOLD)
    p.add_argument(
        "--apply-reference-flags",
        action="store_true",
        help="stamp the built-in quality annotations onto matching relations",
    )
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_curate)

    p = sub.add_parser("evaluate", help="score a curated dataset against an endpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--endpoint", required=True, help="mock:NAME | exec:CMD | http://URL")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-passages", type=int, default=20)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--max-in-flight", type=int, default=4)
    p.add_argument("--no-retrieval", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("analyze", help="compute all report tables from a cache")
    p.add_argument("--data", required=True)
    p.add_argument("--cache", required=True)
    p.add_argument("--seed", type=int, default=0, help="seed for baseline sampling")
    p.add_argument("--baseline-samples", type=int, default=1000)
    common_out(p)
    p.set_defaults(fn=cmd_analyze)

    p = sub.add_parser("intervene", help="re-score under fixed retrieval interventions")
    p.add_argument("--data", required=True)
    p.add_argument("--cache", required=True, help="baseline cache with retrieval")
    p.add_argument("--endpoint", required=True)
    p.add_argument("--mode", default="all", choices=["all", *retrieval.INTERVENTION_MODES])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--max-in-flight", type=int, default=4)
    common_out(p)
    p.set_defaults(fn=cmd_intervene)

    p = sub.add_parser("retriever-metrics", help="retriever agreement tables only")
    p.add_argument("--data", required=True)
    p.add_argument("--cache", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--baseline-samples", type=int, default=1000)
    common_out(p)
    p.set_defaults(fn=cmd_retriever_metrics)

    p = sub.add_parser("rank-report", help="frequency-rank tables only")
    p.add_argument("--data", required=True)
    p.add_argument("--cache", required=True)
    common_out(p)
    p.set_defaults(fn=cmd_rank_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except HarnessError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
