"""AdamW optimization and single- or multi-stage fine-tuning.

One optimizer step consumes one query group: a sampled contrastive instance
(1 positive + h negatives) for LCE/BCE stages, or the teacher's list (up to
20 docs) for RankNet stages. Queries are visited in a seeded shuffle,
reshuffled every epoch. Optimizer state is reset at stage boundaries;
parameters carry across.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .data import Query, Ranking, TeacherRanking
from .errors import DataError
from .losses import LossOutput, lce, ranknet, sigmoid, softplus
from .rng import SplitMix64, substream
from .sampling import SamplerConfig, sample_instance
from .scorer import (
    ScorerConfig,
    ScorerGrads,
    ScorerParams,
    ScoringContext,
    backward_batch,
    init_params,
    score_batch,
)

__all__ = [
    "OptimizerState",
    "StageConfig",
    "TrainPlan",
    "TrainLog",
    "QueryExample",
    "adamw_step",
    "run_stage",
    "run_plan",
    "split_train_val",
    "preset_plan",
]

_SHUFFLE_TAG = 0x53485546
_SPLIT_TAG = 0x53504C54
_VAL_TAG = 0x56414C00

TEACHER_GROUP_CAP = 20  # forwards per distillation step


@dataclass
class OptimizerState:
    """AdamW moments plus the (decoupled) hyperparameters."""

    m: ScorerGrads
    v: ScorerGrads
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01

    @staticmethod
    def for_params(params: ScorerParams, **hyper) -> "OptimizerState":
        return OptimizerState(
            ScorerGrads.zeros_like(params), ScorerGrads.zeros_like(params), **hyper
        )


def adamw_step(
    params: ScorerParams, grads: ScorerGrads, state: OptimizerState, lr: float
) -> tuple[ScorerParams, OptimizerState]:
    """One AdamW update with decoupled weight decay (mutates params and state).

    m <- b1 m + (1-b1) g ; v <- b2 v + (1-b2) g^2 ; bias-corrected m^, v^ ;
    w <- w - lr * ( m^ / (sqrt(v^) + eps) + wd * w ).

    lr = 0 leaves parameters bit-identical while the moments still advance.
    """
    if lr < 0:
        raise ValueError(f"learning rate must be >= 0, got {lr}")
    finite = (
        np.isfinite(grads.w1).all()
        and np.isfinite(grads.b1).all()
        and np.isfinite(grads.w2).all()
        and math.isfinite(grads.b2)
    )
    if not finite:
        raise ValueError("non-finite gradient passed to adamw_step")

    state.t += 1
    b1, b2m = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2m ** state.t

    for w, g, m, v in (
        (params.w1, grads.w1, state.m.w1, state.v.w1),
        (params.b1, grads.b1, state.m.b1, state.v.b1),
        (params.w2, grads.w2, state.m.w2, state.v.w2),
    ):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2m
        v += (1.0 - b2m) * (g * g)
        if lr != 0.0:
            w -= lr * ((m / bc1) / (np.sqrt(v / bc2) + state.eps) + state.weight_decay * w)

    state.m.b2 = b1 * state.m.b2 + (1.0 - b1) * grads.b2
    state.v.b2 = b2m * state.v.b2 + (1.0 - b2m) * grads.b2 * grads.b2
    if lr != 0.0:
        params.b2 -= lr * (
            (state.m.b2 / bc1) / (math.sqrt(state.v.b2 / bc2) + state.eps)
            + state.weight_decay * params.b2
        )
    return params, state


@dataclass(frozen=True)
class StageConfig:
    """One fine-tuning stage: objective, learning rate, and step budget."""

    loss: str  # "lce" | "ranknet" | "bce"
    lr: float
    max_steps: int
    val_interval: int = 500
    sampler: SamplerConfig | None = None  # LCE/BCE stages only
    seed: int = 0

    def __post_init__(self):
        if self.loss not in ("lce", "ranknet", "bce"):
            raise ValueError(f"unknown loss kind {self.loss!r}")
        if self.lr < 0:
            raise ValueError(f"learning rate must be >= 0, got {self.lr}")
        if self.max_steps < 1:
            raise ValueError(f"max_steps must be >= 1, got {self.max_steps}")
        if self.val_interval < 1:
            raise ValueError(f"val_interval must be >= 1, got {self.val_interval}")
        if self.loss in ("lce", "bce") and self.sampler is None:
            raise ValueError(f"{self.loss} stage needs a sampler config")


@dataclass(frozen=True)
class TrainPlan:
    stages: tuple[StageConfig, ...]

    def __post_init__(self):
        if not self.stages:
            raise ValueError("a train plan needs at least one stage")


@dataclass
class TrainLog:
    """Per-step training losses, periodic validation losses, stage wall time."""

    losses: list[float] = field(default_factory=list)
    val: list[tuple[int, float]] = field(default_factory=list)
    wall_seconds: float = 0.0

    def train_csv(self) -> str:
        rows = [f"{i + 1},{loss!r}" for i, loss in enumerate(self.losses)]
        return "step,loss\n" + "".join(r + "\n" for r in rows)

    def val_csv(self) -> str:
        rows = [f"{step},{loss!r}" for step, loss in self.val]
        return "step,val_loss\n" + "".join(r + "\n" for r in rows)


@dataclass(frozen=True)
class QueryExample:
    """Everything the training loop may need for one query."""

    query: Query
    positive_id: str | None = None
    ranking: Ranking | None = None
    teacher: TeacherRanking | None = None


def _group_docs(
    example: QueryExample, stage: StageConfig, ordinal: int, epoch: int, ctx: ScoringContext
) -> list[str]:
    """Doc ids forming this step's group, in loss-alignment order."""
    qid = example.query.id
    if stage.loss == "ranknet":
        if example.teacher is None:
            raise DataError(f"query {qid}: no teacher ranking for distillation")
        return list(example.teacher.doc_ids[:TEACHER_GROUP_CAP])
    if example.positive_id is None:
        raise DataError(f"query {qid}: no positive document for {stage.loss} stage")
    instance = sample_instance(
        stage.sampler, qid, example.positive_id, ordinal, epoch,
        ranking=example.ranking, corpus=ctx.corpus,
    )
    return [instance.positive_id, *instance.negatives]


def _group_loss(stage: StageConfig, scores: np.ndarray) -> LossOutput:
    if stage.loss == "lce":
        return lce(scores)
    if stage.loss == "ranknet":
        return ranknet(scores)
    # bce: positive at index 0 labeled 1, negatives 0; per-doc losses summed
    labels = np.zeros_like(scores)
    labels[0] = 1.0
    value = float((softplus(scores) - labels * scores).sum())
    return LossOutput(value, sigmoid(scores) - labels)


def run_stage(
    params: ScorerParams,
    stage: StageConfig,
    train: Sequence[QueryExample],
    val: Sequence[QueryExample],
    ctx: ScoringContext,
) -> tuple[ScorerParams, TrainLog]:
    """Run exactly stage.max_steps optimizer steps; returns new params and log.

    The input params object is not mutated. Validation loss is computed every
    val_interval steps over fixed validation groups (sampled once, epoch 0 of
    a dedicated substream) and never gates training.
    """
    if not train:
        raise DataError("training data is empty")
    params = params.copy()
    state = OptimizerState.for_params(params)
    log = TrainLog()
    started = time.perf_counter()

    val_stage = stage
    if stage.sampler is not None:
        val_stage = replace(
            stage, sampler=replace(stage.sampler, seed=substream(stage.sampler.seed, _VAL_TAG))
        )
    val_groups = [
        _group_docs(ex, val_stage, ordinal, 0, ctx) for ordinal, ex in enumerate(val)
    ]

    n = len(train)
    order: list[int] = []
    for step in range(stage.max_steps):
        epoch, pos = divmod(step, n)
        if pos == 0:
            order = list(range(n))
            SplitMix64(substream(stage.seed, _SHUFFLE_TAG, epoch)).shuffle(order)
        i = order[pos]
        example = train[i]

        docs = _group_docs(example, stage, i, epoch, ctx)
        x_mat = ctx.feature_matrix(example.query, docs)
        scores, acts = score_batch(params, x_mat)
        loss = _group_loss(stage, scores)
        grads = backward_batch(params, x_mat, acts, loss.grad)
        params, state = adamw_step(params, grads, state, stage.lr)
        log.losses.append(loss.value)

        if (step + 1) % stage.val_interval == 0 and val_groups:
            total = 0.0
            for ex, docs in zip(val, val_groups):
                v_scores, _ = score_batch(params, ctx.feature_matrix(ex.query, docs))
                total += _group_loss(stage, v_scores).value
            log.val.append((step + 1, total / len(val_groups)))

    log.wall_seconds = time.perf_counter() - started
    return params, log


def run_plan(
    config: ScorerConfig,
    plan: TrainPlan,
    train: Sequence[QueryExample],
    val: Sequence[QueryExample],
    ctx: ScoringContext,
) -> tuple[ScorerParams, list[TrainLog]]:
    """Initialize from config and apply stages left to right.

    Parameters carry across stage boundaries; optimizer state does not.
    """
    params = init_params(config)
    logs = []
    for stage in plan.stages:
        params, log = run_stage(params, stage, train, val, ctx)
        logs.append(log)
    return params, logs


def split_train_val(
    queries: Sequence[Query], fraction: float = 0.01, seed: int = 0
) -> tuple[list[Query], list[Query]]:
    """Seeded disjoint partition; validation gets round(n * fraction), min 1."""
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must be in (0, 1), got {fraction}")
    n = len(queries)
    n_val = max(1, round(n * fraction))
    if n_val >= n:
        raise DataError(f"{n} queries cannot support a non-empty train/val split")
    idx = list(range(n))
    SplitMix64(substream(seed, _SPLIT_TAG)).shuffle(idx)
    val_idx = set(idx[:n_val])
    train = [q for i, q in enumerate(queries) if i not in val_idx]
    val = [q for i, q in enumerate(queries) if i in val_idx]
    return train, val


def preset_plan(
    name: str,
    variant: str = "base",
    scale: float = 1.0,
    sampler: SamplerConfig | None = None,
    seed: int = 0,
) -> TrainPlan:
    """Long-schedule presets for plans C, D, C->D, D->C.

    Two preset families are shipped, "base" and "alt". lr is 1e-5 throughout
    except second-stage distillation (1e-8 for base, 1e-9 for alt). Step
    budgets: C 25k first stage / 31k second; D 2k (base) or 1k (alt) first
    stage, second stage 1k @ 1e-8 / 3k @ 1e-9. `scale` shrinks the budgets
    for desk-size runs.
    """
    if variant not in ("base", "alt"):
        raise ValueError(f"unknown variant {variant!r}")
    el = variant == "base"
    if sampler is None:
        sampler = SamplerConfig(seed=seed)

    def steps(base: int) -> int:
        return max(1, round(base * scale))

    def c_stage(budget: int) -> StageConfig:
        return StageConfig("lce", 1e-5, steps(budget), sampler=sampler, seed=seed)

    def d_stage(budget: int, lr: float) -> StageConfig:
        return StageConfig("ranknet", lr, steps(budget), seed=seed)

    key = name.replace("→", "->")
    plans = {
        "C": (c_stage(25_000),),
        "D": (d_stage(2_000 if el else 1_000, 1e-5),),
        "C->D": (c_stage(25_000), d_stage(1_000 if el else 3_000, 1e-8 if el else 1e-9)),
        "D->C": (d_stage(2_000 if el else 1_000, 1e-5), c_stage(31_000)),
    }
    if key not in plans:
        raise ValueError(f"unknown plan name {name!r} (expected C, D, C->D, D->C)")
    return TrainPlan(plans[key])
