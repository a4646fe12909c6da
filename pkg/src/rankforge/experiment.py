"""Experiment configuration and the RQ1/RQ2/RQ3 comparison driver.

A JSON config is the single source of truth: data paths, scorer and sampler
settings, named train plans, metric specs, and seeds. The driver trains
every named plan from one shared initialization, re-ranks the first-stage
run with each checkpoint (plus the untrained scorer as baseline), evaluates,
and emits three markdown tables: single-stage C vs D, C->D vs D->C, and
best-single vs best-multi by mean nDCG@10.

All component randomness is derived from the master seed via tagged
substreams, so outputs are byte-identical across runs on one platform.
Timing is never written into artifacts.
"""

from __future__ import annotations

import json
import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .data import (
    Corpus,
    Qrels,
    Query,
    Ranking,
    TeacherRanking,
    parse_corpus,
    parse_path,
    parse_qrels,
    parse_queries,
    parse_run,
    parse_teacher,
    write_run,
)
from .errors import DataError
from .evaluation import (
    MetricReport,
    MetricSpec,
    SystemResult,
    build_table,
    evaluate_all,
    report_csv,
    rerank,
)
from .retrieval import Bm25Params, InvertedIndex, build_index, retrieve_topk
from .rng import substream
from .sampling import SamplerConfig
from .scorer import (
    ScorerConfig,
    ScorerParams,
    ScoringContext,
    init_params,
    save_params,
)
from .training import (
    QueryExample,
    StageConfig,
    TrainLog,
    TrainPlan,
    preset_plan,
    run_plan,
    split_train_val,
)

__all__ = [
    "ExperimentConfig",
    "NamedPlan",
    "load_config",
    "default_plan_specs",
    "run_experiment",
    "prepare",
    "choose_positive",
    "plan_dir_name",
    "merged_train_csv",
    "merged_val_csv",
]

_INIT_TAG = 0x494E4954
_EVAL_TAG = 0x4556414C
_VALS_TAG = 0x56414C53
_STAGE_TAG = 0x53544147
_SAMPLER_TAG = 0x534D504C

RQ_PLAN_NAMES = ("C", "D", "C->D", "D->C")


@dataclass(frozen=True)
class NamedPlan:
    name: str
    plan: TrainPlan


@dataclass(frozen=True)
class ExperimentConfig:
    corpus: Path
    queries: Path
    qrels: Path
    teacher: Path | None
    first_stage: str  # "build" or a run-file path (resolved)
    out: Path
    seed: int
    retrieve_depth: int
    rerank_depth: int
    eval_fraction: float
    val_fraction: float
    scorer: ScorerConfig
    bm25: Bm25Params
    metrics: tuple[MetricSpec, ...]
    plans: tuple[NamedPlan, ...]


def default_plan_specs() -> dict:
    """Desk-scale plan definitions used when a config omits `plans`."""
    lce = {"loss": "lce", "lr": 1e-3, "steps": 2000, "negatives": 20, "pool_depth": 50}
    return {
        "C": [lce],
        "D": [{"loss": "ranknet", "lr": 1e-3, "steps": 2000}],
        "C->D": [lce, {"loss": "ranknet", "lr": 1e-5, "steps": 1000}],
        "D->C": [
            {"loss": "ranknet", "lr": 1e-3, "steps": 2000},
            dict(lce, steps=2500),
        ],
    }


_TOP_KEYS = {
    "corpus", "queries", "qrels", "teacher", "first_stage", "out", "seed",
    "retrieve_depth", "rerank_depth", "eval_fraction", "val_fraction",
    "scorer", "bm25", "metrics", "plans",
}
_STAGE_KEYS = {
    "loss", "lr", "steps", "val_interval", "negatives", "pool_depth", "policy",
}


def _stage_from_dict(
    raw: Mapping, seed: int, plan_name: str, stage_idx: int
) -> StageConfig:
    unknown = set(raw) - _STAGE_KEYS
    if unknown:
        raise DataError(f"plan {plan_name}: unknown stage keys {sorted(unknown)}")
    for key in ("loss", "lr", "steps"):
        if key not in raw:
            raise DataError(f"plan {plan_name}: stage {stage_idx} missing {key!r}")
    loss = raw["loss"]
    sampler = None
    if loss in ("lce", "bce"):
        sampler = SamplerConfig(
            negatives=int(raw.get("negatives", 99)),
            pool_depth=int(raw.get("pool_depth", 200)),
            policy=str(raw.get("policy", "hard")),
            seed=substream(seed, _SAMPLER_TAG, stage_idx),
        )
    return StageConfig(
        loss=loss,
        lr=float(raw["lr"]),
        max_steps=int(raw["steps"]),
        val_interval=int(raw.get("val_interval", 500)),
        sampler=sampler,
        seed=substream(seed, _STAGE_TAG, stage_idx),
    )


def _resolve_plans(raw_plans: Mapping, seed: int) -> tuple[NamedPlan, ...]:
    plans = []
    for name, body in raw_plans.items():
        plan_seed = substream(seed, _STAGE_TAG, *(ord(c) for c in name))
        if isinstance(body, Mapping) and body.get("preset") == "reference":
            plan = preset_plan(
                name,
                variant=body.get("variant", "base"),
                scale=float(body.get("scale", 1.0)),
                sampler=SamplerConfig(seed=substream(plan_seed, _SAMPLER_TAG)),
                seed=plan_seed,
            )
        elif isinstance(body, Sequence) and not isinstance(body, (str, bytes)):
            stages = tuple(
                _stage_from_dict(stage, plan_seed, name, i)
                for i, stage in enumerate(body)
            )
            plan = TrainPlan(stages)
        else:
            raise DataError(f"plan {name}: expected a stage list or a preset reference")
        plans.append(NamedPlan(name, plan))
    names = [p.name for p in plans]
    if len(set(names)) != len(names):
        raise DataError("plan names must be unique")
    return tuple(plans)


def load_config(
    path: str | Path, seed: int | None = None, out: str | Path | None = None
) -> ExperimentConfig:
    """Parse and validate an experiment config; flags override config fields.

    Relative paths are resolved against the config file's directory.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise DataError(f"config {path} must be a JSON object")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise DataError(f"config has unknown keys {sorted(unknown)}")

    base = path.parent

    def resolve(p: str) -> Path:
        candidate = Path(p)
        return candidate if candidate.is_absolute() else base / candidate

    for key in ("corpus", "queries", "qrels"):
        if key not in raw:
            raise DataError(f"config missing required key {key!r}")

    master_seed = int(raw.get("seed", 0)) if seed is None else int(seed)

    data_paths = {key: resolve(raw[key]) for key in ("corpus", "queries", "qrels")}
    teacher = resolve(raw["teacher"]) if raw.get("teacher") else None
    for key, p in {**data_paths, "teacher": teacher}.items():
        if p is not None and not p.is_file():
            raise DataError(f"{key} path does not exist: {p}")

    first_stage = raw.get("first_stage", "build")
    if first_stage != "build":
        fs_path = resolve(first_stage)
        if not fs_path.is_file():
            raise DataError(f"first_stage run does not exist: {fs_path}")
        first_stage = str(fs_path)

    if out is not None:
        out_path = Path(out)
    elif "out" in raw:
        out_path = resolve(raw["out"])
    else:
        raise DataError("config missing output directory (key 'out' or --out)")

    scorer_raw = raw.get("scorer", {})
    scorer = ScorerConfig(
        buckets=int(scorer_raw.get("buckets", 1024)),
        hidden=int(scorer_raw.get("hidden", 16)),
        seed=int(scorer_raw.get("seed", substream(master_seed, _INIT_TAG))),
    )
    bm25_raw = raw.get("bm25", {})
    bm25 = Bm25Params(
        k1=float(bm25_raw.get("k1", 0.9)), b=float(bm25_raw.get("b", 0.4))
    )
    metrics_raw = raw.get(
        "metrics",
        [{"kind": "ap"}, {"kind": "ndcg", "cutoff": 10}, {"kind": "mrr", "cutoff": 10}],
    )
    metrics = tuple(
        MetricSpec(
            kind=m["kind"],
            cutoff=m.get("cutoff"),
            threshold=int(m.get("threshold", 1)),
            gain=m.get("gain", "linear"),
        )
        for m in metrics_raw
    )
    labels = [m.label for m in metrics]
    if len(set(labels)) != len(labels):
        raise DataError("metric labels must be unique")

    plans = _resolve_plans(raw.get("plans", default_plan_specs()), master_seed)

    return ExperimentConfig(
        corpus=data_paths["corpus"],
        queries=data_paths["queries"],
        qrels=data_paths["qrels"],
        teacher=teacher,
        first_stage=first_stage,
        out=out_path,
        seed=master_seed,
        retrieve_depth=int(raw.get("retrieve_depth", 100)),
        rerank_depth=int(raw.get("rerank_depth", 100)),
        eval_fraction=float(raw.get("eval_fraction", 0.2)),
        val_fraction=float(raw.get("val_fraction", 0.01)),
        scorer=scorer,
        bm25=bm25,
        metrics=metrics,
        plans=plans,
    )


def choose_positive(qrels: Qrels, query_id: str) -> str | None:
    """Highest-graded judged doc with grade >= 1; ties break on doc id."""
    best: tuple[int, str] | None = None
    for doc, grade in qrels.docs_for(query_id).items():
        if grade >= 1 and (best is None or (-grade, doc) < best):
            best = (-grade, doc)
    return None if best is None else best[1]


@dataclass
class PreparedData:
    """Everything the driver needs after parsing, indexing, and splitting."""

    corpus: Corpus
    queries: dict[str, Query]
    qrels: Qrels
    teachers: dict[str, TeacherRanking]
    index: InvertedIndex
    ctx: ScoringContext
    first_stage: dict[str, Ranking]
    built_first_stage: bool
    eval_queries: list[Query]
    train_examples: list[QueryExample]
    val_examples: list[QueryExample]


def prepare(cfg: ExperimentConfig) -> PreparedData:
    """Parse inputs, build/read the first-stage run, and split queries."""
    corpus = parse_path(cfg.corpus, parse_corpus)
    queries = {q.id: q for q in parse_path(cfg.queries, parse_queries)}
    qrels = parse_path(cfg.qrels, parse_qrels)
    teachers: dict[str, TeacherRanking] = {}
    if cfg.teacher is not None:
        teachers = {t.query_id: t for t in parse_path(cfg.teacher, parse_teacher)}

    index = build_index(corpus)
    ctx = ScoringContext(corpus, index, cfg.bm25, cfg.scorer.buckets)

    built = cfg.first_stage == "build"
    if built:
        first_stage = {
            qid: retrieve_topk(index, cfg.bm25, queries[qid], cfg.retrieve_depth)
            for qid in sorted(queries)
        }
    else:
        first_stage = {r.query_id: r for r in parse_path(cfg.first_stage, parse_run)}

    query_list = [queries[qid] for qid in sorted(queries)]
    train_pool, eval_queries = split_train_val(
        query_list, cfg.eval_fraction, seed=substream(cfg.seed, _EVAL_TAG)
    )
    for q in eval_queries:
        if q.id not in first_stage:
            raise DataError(f"evaluation query {q.id} has no first-stage ranking")

    stages = [stage for p in cfg.plans for stage in p.plan.stages]
    needs_teacher = any(stage.loss == "ranknet" for stage in stages)
    # hard sampling errors out on short pools, so a trainable query must
    # bring a first-stage ranking deep enough for the largest negative count
    min_pool = 1 + max(
        (
            s.sampler.negatives
            for s in stages
            if s.sampler is not None and s.sampler.policy == "hard"
        ),
        default=0,
    )
    eligible = []
    for q in train_pool:
        ranking = first_stage.get(q.id)
        if ranking is None or len(ranking.entries) < min_pool:
            continue
        positive = choose_positive(qrels, q.id)
        if positive is None:
            continue
        if needs_teacher and q.id not in teachers:
            continue
        eligible.append(q)
    if len(eligible) < 2:
        raise DataError(
            f"only {len(eligible)} trainable queries (need a positive judgment,"
            f" a first-stage ranking of >= {min_pool} docs"
            + (", and a teacher entry" if needs_teacher else "")
            + " per query)"
        )
    train_qs, val_qs = split_train_val(
        eligible, cfg.val_fraction, seed=substream(cfg.seed, _VALS_TAG)
    )

    def example(q: Query) -> QueryExample:
        return QueryExample(
            query=q,
            positive_id=choose_positive(qrels, q.id),
            ranking=first_stage[q.id],
            teacher=teachers.get(q.id),
        )

    return PreparedData(
        corpus=corpus,
        queries=queries,
        qrels=qrels,
        teachers=teachers,
        index=index,
        ctx=ctx,
        first_stage=first_stage,
        built_first_stage=built,
        eval_queries=eval_queries,
        train_examples=[example(q) for q in train_qs],
        val_examples=[example(q) for q in val_qs],
    )


def plan_dir_name(name: str) -> str:
    return name.replace("->", "-to-")


def rerank_eval_set(
    params: ScorerParams, prep: PreparedData, depth: int
) -> list[Ranking]:
    return [
        rerank(params, prep.ctx, q, prep.first_stage[q.id], depth)
        for q in sorted(prep.eval_queries, key=lambda q: q.id)
    ]


@dataclass
class _Workspace:
    """Tracks artifacts so a failed run leaves nothing half-written."""

    out: Path
    created_out: bool = False
    files: list[Path] = field(default_factory=list)
    dirs: list[Path] = field(default_factory=list)

    def write_text(self, rel: str, text: str) -> Path:
        path = self.out / rel
        if not path.parent.exists():
            self._mkdirs(path.parent)
        path.write_text(text, encoding="utf-8")
        self.files.append(path)
        return path

    def write_bytes(self, rel: str, blob: bytes) -> Path:
        path = self.out / rel
        if not path.parent.exists():
            self._mkdirs(path.parent)
        path.write_bytes(blob)
        self.files.append(path)
        return path

    def _mkdirs(self, directory: Path) -> None:
        missing = []
        walk = directory
        while not walk.exists():
            missing.append(walk)
            walk = walk.parent
        directory.mkdir(parents=True, exist_ok=True)
        self.dirs.extend(reversed(missing))

    def cleanup(self) -> None:
        if self.created_out:
            shutil.rmtree(self.out, ignore_errors=True)
            return
        for f in self.files:
            f.unlink(missing_ok=True)
        for d in reversed(self.dirs):
            try:
                d.rmdir()
            except OSError:
                pass


def _system_result(
    label: str, rankings: Sequence[Ranking], qrels: Qrels, metrics: Sequence[MetricSpec]
) -> SystemResult:
    return SystemResult(label, evaluate_all(rankings, qrels, metrics))


def _mean_ndcg10(system: SystemResult) -> float:
    if "nDCG@10" not in system.reports:
        raise DataError("experiment requires an nDCG@10 metric for best-plan selection")
    return system.reports["nDCG@10"].mean


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Train all plans, re-rank, evaluate, and emit RQ1-RQ3 tables.

    Returns a summary dict (also written as summary.json). On any failure
    partially written outputs are removed.
    """
    missing = [n for n in RQ_PLAN_NAMES if n not in {p.name for p in cfg.plans}]
    if missing:
        raise DataError(f"experiment needs plans {list(RQ_PLAN_NAMES)}; missing {missing}")

    ws = _Workspace(cfg.out, created_out=not cfg.out.exists())
    try:
        cfg.out.mkdir(parents=True, exist_ok=True)
        prep = prepare(cfg)

        if prep.built_first_stage:
            ordered = [prep.first_stage[qid] for qid in sorted(prep.first_stage)]
            ws.write_text("first_stage.txt", write_run(ordered, tag="bm25"))

        eval_qids = sorted(q.id for q in prep.eval_queries)
        fs_rankings = [prep.first_stage[qid] for qid in eval_qids]
        bm25_system = _system_result("bm25", fs_rankings, prep.qrels, cfg.metrics)
        ws.write_text("bm25/metrics.csv", report_csv(bm25_system.reports))

        init = init_params(cfg.scorer)
        systems: dict[str, SystemResult] = {"bm25": bm25_system}

        untrained_rankings = rerank_eval_set(init, prep, cfg.rerank_depth)
        systems["untrained"] = _system_result(
            "untrained", untrained_rankings, prep.qrels, cfg.metrics
        )
        ws.write_text("untrained/rerank.txt", write_run(untrained_rankings, tag="untrained"))
        ws.write_text("untrained/metrics.csv", report_csv(systems["untrained"].reports))

        for named in cfg.plans:
            params, logs = run_plan(
                cfg.scorer, named.plan, prep.train_examples, prep.val_examples, prep.ctx
            )
            sub = plan_dir_name(named.name)
            ws.write_bytes(f"{sub}/params.bin", save_params(params))
            ws.write_text(f"{sub}/train.csv", merged_train_csv(logs))
            ws.write_text(f"{sub}/val.csv", merged_val_csv(logs))
            rankings = rerank_eval_set(params, prep, cfg.rerank_depth)
            ws.write_text(f"{sub}/rerank.txt", write_run(rankings, tag=sub))
            systems[named.name] = _system_result(
                named.name, rankings, prep.qrels, cfg.metrics
            )
            ws.write_text(f"{sub}/metrics.csv", report_csv(systems[named.name].reports))

        baseline = systems["untrained"]
        rq1 = build_table(
            baseline,
            [systems["bm25"], systems["C"], systems["D"]],
            pairings=[("C", "D")],
        )
        rq2 = build_table(
            baseline,
            [systems["C->D"], systems["D->C"]],
            pairings=[("C->D", "D->C")],
        )
        best_single = max(("C", "D"), key=lambda n: (_mean_ndcg10(systems[n]), n))
        best_multi = max(("C->D", "D->C"), key=lambda n: (_mean_ndcg10(systems[n]), n))
        rq3 = build_table(
            baseline,
            [systems[best_single], systems[best_multi]],
            pairings=[(best_single, best_multi)],
        )
        ws.write_text("rq1.md", "# RQ1: single-stage fine-tuning\n\n" + rq1.to_markdown())
        ws.write_text("rq2.md", "# RQ2: stage order in multi-stage fine-tuning\n\n" + rq2.to_markdown())
        ws.write_text("rq3.md", "# RQ3: best single stage vs best multi stage\n\n" + rq3.to_markdown())

        summary = {
            "seed": cfg.seed,
            "queries": {"train": len(prep.train_examples), "val": len(prep.val_examples),
                        "eval": len(prep.eval_queries)},
            "plans": {p.name: [s.max_steps for s in p.plan.stages] for p in cfg.plans},
            "means": {
                label: {col: rep.mean for col, rep in system.reports.items()}
                for label, system in systems.items()
            },
            "best_single": best_single,
            "best_multi": best_multi,
        }
        ws.write_text("summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
        return summary
    except BaseException:
        ws.cleanup()
        raise


def merged_train_csv(logs: Sequence[TrainLog]) -> str:
    rows = ["step,loss"]
    step = 0
    for log in logs:
        for loss in log.losses:
            step += 1
            rows.append(f"{step},{loss!r}")
    return "".join(r + "\n" for r in rows)


def merged_val_csv(logs: Sequence[TrainLog]) -> str:
    rows = ["step,val_loss"]
    offset = 0
    for log in logs:
        for step, loss in log.val:
            rows.append(f"{offset + step},{loss!r}")
        offset += len(log.losses)
    return "".join(r + "\n" for r in rows)
