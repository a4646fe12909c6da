"""Command-line surface.

Subcommands: index, retrieve, train, rerank, evaluate, compare, synth,
experiment. Every command is deterministic given its inputs and seeds; any
failure prints a single `error: <message>` line on stderr and exits nonzero.

RANKFORGE_THREADS caps worker parallelism. The current implementation is
single-threaded throughout, so the variable is validated and recorded but
does not change behavior.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
import time
from pathlib import Path

from .data import (
    parse_corpus,
    parse_path,
    parse_qrels,
    parse_queries,
    parse_run,
    write_run,
)
from .errors import DataError, RankforgeError
from .evaluation import (
    MetricSpec,
    SystemResult,
    build_table,
    evaluate_all,
    report_csv,
    rerank,
)
from .experiment import (
    load_config,
    merged_train_csv,
    merged_val_csv,
    plan_dir_name,
    prepare,
    run_experiment,
)
from .retrieval import Bm25Params, build_index, retrieve_topk
from .scorer import ScoringContext, load_params, save_params
from .synth import SynthSpec, generate, write_dataset
from .training import run_plan

__all__ = ["main"]


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # single-line machine-parseable errors
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(2)


def _threads_from_env() -> int:
    raw = os.environ.get("RANKFORGE_THREADS")
    if raw is None:
        return 1
    try:
        threads = int(raw)
    except ValueError:
        raise DataError(f"RANKFORGE_THREADS must be an integer, got {raw!r}") from None
    if threads < 1:
        raise DataError(f"RANKFORGE_THREADS must be >= 1, got {threads}")
    return threads


def _parse_metrics(spec: str, threshold: int, gain: str) -> tuple[MetricSpec, ...]:
    """Parse 'ap,ndcg@10,mrr@10' style metric lists."""
    out = []
    for item in spec.split(","):
        item = item.strip().lower()
        if not item:
            continue
        name, _, cut = item.partition("@")
        cutoff = None
        if cut:
            try:
                cutoff = int(cut)
            except ValueError:
                raise DataError(f"bad metric cutoff in {item!r}") from None
        out.append(MetricSpec(kind=name, cutoff=cutoff, threshold=threshold, gain=gain))
    if not out:
        raise DataError("no metrics given")
    return tuple(out)


def _write_or_print(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding="utf-8")
        print(f"wrote {out}")


def cmd_index(args) -> int:
    corpus = parse_path(args.corpus, parse_corpus)
    index = build_index(corpus)
    print(f"documents: {index.size}")
    print(f"terms: {len(index.postings)}")
    print(f"postings: {sum(len(p) for p in index.postings.values())}")
    print(f"avg_doc_length: {index.avg_doc_length:.4f}")
    return 0


def cmd_retrieve(args) -> int:
    corpus = parse_path(args.corpus, parse_corpus)
    queries = parse_path(args.queries, parse_queries)
    index = build_index(corpus)
    params = Bm25Params(k1=args.k1, b=args.b)
    rankings = [retrieve_topk(index, params, q, args.depth) for q in queries]
    rankings = [r for r in rankings if r.entries]
    _write_or_print(write_run(rankings, tag="bm25"), args.out)
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args.config, seed=args.seed, out=args.out)
    chosen = [p for p in cfg.plans if p.name == args.plan]
    if not chosen:
        known = [p.name for p in cfg.plans]
        raise DataError(f"plan {args.plan!r} not in config (have {known})")
    cfg = dataclasses.replace(cfg, plans=(chosen[0],))
    prep = prepare(cfg)
    started = time.perf_counter()
    params, logs = run_plan(
        cfg.scorer, chosen[0].plan, prep.train_examples, prep.val_examples, prep.ctx
    )
    elapsed = time.perf_counter() - started
    plan_dir = cfg.out / plan_dir_name(chosen[0].name)
    plan_dir.mkdir(parents=True, exist_ok=True)
    (plan_dir / "params.bin").write_bytes(save_params(params))
    (plan_dir / "train.csv").write_text(merged_train_csv(logs), encoding="utf-8")
    (plan_dir / "val.csv").write_text(merged_val_csv(logs), encoding="utf-8")
    steps = sum(len(log.losses) for log in logs)
    print(f"trained plan {chosen[0].name}: {steps} steps in {elapsed:.1f}s")
    print(f"wrote {plan_dir / 'params.bin'}")
    return 0


def cmd_rerank(args) -> int:
    corpus = parse_path(args.corpus, parse_corpus)
    queries = {q.id: q for q in parse_path(args.queries, parse_queries)}
    rankings = parse_path(args.run, parse_run)
    try:
        params = load_params(Path(args.params).read_bytes())
    except OSError as exc:
        raise DataError(f"cannot read {args.params}: {exc.strerror or exc}") from exc
    index = build_index(corpus)
    ctx = ScoringContext(corpus, index, Bm25Params(k1=args.k1, b=args.b), params.buckets)
    out_rankings = []
    for ranking in rankings:
        if ranking.query_id not in queries:
            raise DataError(f"run query {ranking.query_id} missing from queries file")
        out_rankings.append(
            rerank(params, ctx, queries[ranking.query_id], ranking, args.depth)
        )
    _write_or_print(write_run(out_rankings, tag="rerank"), args.out)
    return 0


def cmd_evaluate(args) -> int:
    rankings = parse_path(args.run, parse_run)
    qrels = parse_path(args.qrels, parse_qrels)
    specs = _parse_metrics(args.metrics, args.threshold, args.gain)
    reports = evaluate_all(rankings, qrels, specs)
    _write_or_print(report_csv(reports), args.out)
    for label, report in reports.items():
        print(f"{label}: {report.mean:.4f} over {len(report.per_query)} queries",
              file=sys.stderr)
    return 0


def _run_label(path: str) -> str:
    """System label for a run file: its tag column."""
    try:
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                parts = line.split()
                if parts:
                    return parts[5] if len(parts) >= 6 else Path(path).stem
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from exc
    return Path(path).stem


def cmd_compare(args) -> int:
    qrels = parse_path(args.qrels, parse_qrels)
    specs = _parse_metrics(args.metrics, args.threshold, args.gain)

    def system(path: str) -> SystemResult:
        rankings = parse_path(path, parse_run)
        return SystemResult(_run_label(path), evaluate_all(rankings, qrels, specs))

    baseline = system(args.baseline)
    variants = [system(p) for p in args.runs]
    pairings = []
    if args.pairs:
        for pair in args.pairs.split(","):
            a, sep, b = pair.partition(":")
            if not sep or not a or not b:
                raise DataError(f"bad --pairs entry {pair!r} (want LABEL:LABEL)")
            pairings.append((a, b))
    table = build_table(baseline, variants, pairings)
    _write_or_print(table.to_markdown(), args.out)
    return 0


def cmd_synth(args) -> int:
    spec = SynthSpec(
        vocab_size=args.vocab,
        topics=args.topics,
        docs_per_topic=args.docs_per_topic,
        queries=args.queries,
        noise=args.noise,
        seed=args.seed if args.seed is not None else 42,
    )
    paths = write_dataset(generate(spec), args.out)
    for name in ("corpus", "queries", "qrels", "teacher"):
        print(f"wrote {paths[name]}")
    return 0


def cmd_experiment(args) -> int:
    cfg = load_config(args.config, seed=args.seed, out=args.out)
    started = time.perf_counter()
    summary = run_experiment(cfg)
    elapsed = time.perf_counter() - started
    for name in ("rq1.md", "rq2.md", "rq3.md"):
        print(f"wrote {cfg.out / name}")
    ndcg = {
        label: means.get("nDCG@10") for label, means in summary["means"].items()
    }
    for label in sorted(ndcg):
        if ndcg[label] is not None:
            print(f"nDCG@10 {label}: {ndcg[label]:.4f}")
    print(f"best single: {summary['best_single']}, best multi: {summary['best_multi']}")
    print(f"completed in {elapsed:.1f}s")
    return 0


def _build_parser() -> _Parser:
    parser = _Parser(prog="rankforge", description="Desk-scale re-ranker fine-tuning toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, func, help_: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=func)
        return p

    p = add("index", cmd_index, "build an inverted index and print its stats")
    p.add_argument("--corpus", required=True, help="corpus TSV (id<TAB>text)")

    p = add("retrieve", cmd_retrieve, "BM25 retrieval to a TREC run file")
    p.add_argument("--corpus", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--depth", type=int, default=100, help="retrieval depth (default 100)")
    p.add_argument("--k1", type=float, default=0.9)
    p.add_argument("--b", type=float, default=0.4)
    p.add_argument("--out", default=None, help="run file (stdout if omitted)")

    p = add("train", cmd_train, "train one named plan from an experiment config")
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument("--plan", required=True, help="plan name, e.g. C, D, C->D, D->C")
    p.add_argument("--seed", type=int, default=None, help="override config seed")
    p.add_argument("--out", default=None, help="override output directory")

    p = add("rerank", cmd_rerank, "re-rank a run with a trained checkpoint")
    p.add_argument("--corpus", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--run", required=True, help="first-stage TREC run")
    p.add_argument("--params", required=True, help="checkpoint file")
    p.add_argument("--depth", type=int, default=100, help="rerank depth (default 100)")
    p.add_argument("--k1", type=float, default=0.9)
    p.add_argument("--b", type=float, default=0.4)
    p.add_argument("--out", default=None, help="run file (stdout if omitted)")

    p = add("evaluate", cmd_evaluate, "evaluate a run against qrels, CSV output")
    p.add_argument("--run", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--metrics", default="ap,ndcg@10,mrr@10")
    p.add_argument("--threshold", type=int, default=1, help="binarization grade")
    p.add_argument("--gain", default="linear", choices=("linear", "exponential"))
    p.add_argument("--out", default=None, help="CSV file (stdout if omitted)")

    p = add("compare", cmd_compare, "significance-marked comparison table")
    p.add_argument("--qrels", required=True)
    p.add_argument("--baseline", required=True, help="baseline run file")
    p.add_argument("runs", nargs="*", help="variant run files")
    p.add_argument("--pairs", default="", help="sibling pairs LABEL:LABEL,...")
    p.add_argument("--metrics", default="ap,ndcg@10,mrr@10")
    p.add_argument("--threshold", type=int, default=1)
    p.add_argument("--gain", default="linear", choices=("linear", "exponential"))
    p.add_argument("--out", default=None, help="markdown file (stdout if omitted)")

    p = add("synth", cmd_synth, "generate a synthetic dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--vocab", type=int, default=5000)
    p.add_argument("--topics", type=int, default=20)
    p.add_argument("--docs-per-topic", type=int, default=100)
    p.add_argument("--queries", type=int, default=250)
    p.add_argument("--noise", type=float, default=0.5)

    p = add("experiment", cmd_experiment, "run the full plan comparison")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        _threads_from_env()
        return args.func(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except RankforgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
