"""Synthetic retrieval datasets with known graded relevance.

The vocabulary is split into disjoint per-topic slices with Zipf-shaped
in-slice token distributions. Each document draws its tokens from a mixture:
a primary topic with weight alpha plus several side topics, each kept below
weight 0.25. Relevance of a document to a query is the quantized share of
the query's topic in the document's mixture (>= 0.75 -> 3, >= 0.5 -> 2,
>= 0.25 -> 1, else 0), so grades are exact by construction and side-topic
memberships never cross the lowest band. Teacher rankings sort the judged
documents by true grade plus Gaussian noise.

Everything is derived from counter-based substreams of one seed, so the
rendered files are byte-identical across runs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .rng import SplitMix64, substream

__all__ = ["SynthSpec", "SynthDataset", "generate", "write_dataset"]

_DOC_TAG = 0x444F4300
_QRY_TAG = 0x51525900
_TCH_TAG = 0x54434800

# queries draw from the frequent end of their topic slice, so every query
# matches a healthy share of in-topic documents and queries about one topic
# share most of their vocabulary; the overlap is what lets a model trained
# on one split of queries transfer to held-out queries of the same topic
_QUERY_VOCAB_CAP = 25

# (grade, alpha low, alpha high, share of docs); alphas sit 0.03 inside the
# quantization bands so a drawn mixture can never land on a band boundary
_STRATA = (
    (3, 0.78, 0.97, 0.05),
    (2, 0.53, 0.72, 0.08),
    (1, 0.28, 0.47, 0.12),
    (0, 0.03, 0.22, 0.75),
)

TEACHER_DEPTH = 20


@dataclass(frozen=True)
class SynthSpec:
    """Size and noise knobs for one generated dataset."""

    vocab_size: int = 5000
    topics: int = 20
    docs_per_topic: int = 100
    queries: int = 250
    noise: float = 0.5  # teacher noise sigma
    seed: int = 42

    def __post_init__(self):
        for name in ("vocab_size", "topics", "docs_per_topic", "queries"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.vocab_size < self.topics:
            raise ValueError("need at least one vocabulary word per topic")
        if not (self.noise >= 0.0 and math.isfinite(self.noise)):
            raise ValueError(f"noise must be finite and >= 0, got {self.noise}")


@dataclass(frozen=True)
class SynthDataset:
    """Rendered artifact file contents, ready to write."""

    corpus_tsv: str
    queries_tsv: str
    qrels_txt: str
    teacher_jsonl: str


def _zipf_cdf(m: int) -> np.ndarray:
    weights = 1.0 / np.arange(1, m + 1)
    return np.cumsum(weights / weights.sum())


def _draw_word(rng: SplitMix64, cdf: np.ndarray, slice_start: int) -> str:
    idx = int(np.searchsorted(cdf, rng.uniform(), side="right"))
    return f"w{slice_start + min(idx, len(cdf) - 1):05d}"


def _grade_counts(n: int) -> list[tuple[int, float, float, int]]:
    """Per-stratum (grade, alpha lo, alpha hi, count); grade-3 never empty."""
    counts = []
    left = n
    for grade, lo, hi, share in _STRATA[:-1]:
        want = max(1, round(share * n)) if grade == 3 else round(share * n)
        take = min(want, left)
        counts.append((grade, lo, hi, take))
        left -= take
    grade, lo, hi, _ = _STRATA[-1]
    counts.append((grade, lo, hi, left))
    return counts


def generate(spec: SynthSpec) -> SynthDataset:
    """Build corpus, queries, qrels, and teacher files for the spec."""
    slice_len = spec.vocab_size // spec.topics
    cdf = _zipf_cdf(slice_len)
    query_cdf = _zipf_cdf(min(slice_len, _QUERY_VOCAB_CAP))
    t_count = spec.topics

    # documents: topic-major order, strata in decreasing grade inside a topic
    doc_ids: list[str] = []
    doc_grade: list[int] = []  # grade w.r.t. the primary topic
    doc_topic: list[int] = []
    corpus_lines: list[str] = []
    for topic in range(t_count):
        for grade, lo, hi, count in _grade_counts(spec.docs_per_topic):
            for _ in range(count):
                d = len(doc_ids)
                rng = SplitMix64(substream(spec.seed, _DOC_TAG, d))
                alpha = 1.0 if t_count == 1 else lo + rng.uniform() * (hi - lo)
                n_side = 0
                sides: list[int] = []
                if t_count > 1:
                    n_side = min(t_count - 1, max(3, math.ceil((1.0 - alpha) / 0.20)))
                    others = [t for t in range(t_count) if t != topic]
                    sides = rng.sample(others, n_side)
                length = 20 + rng.below(41)
                tokens = []
                for _ in range(length):
                    u = rng.uniform()
                    if u < alpha or not sides:
                        src = topic
                    else:
                        per = (1.0 - alpha) / n_side
                        src = sides[min(n_side - 1, int((u - alpha) / per))]
                    tokens.append(_draw_word(rng, cdf, src * slice_len))
                doc_ids.append(f"d{d:05d}")
                doc_grade.append(grade)
                doc_topic.append(topic)
                corpus_lines.append(f"d{d:05d}\t{' '.join(tokens)}\n")

    # per-topic judged pool, already doc-id sorted by construction
    topic_docs: list[list[int]] = [[] for _ in range(t_count)]
    for d, topic in enumerate(doc_topic):
        topic_docs[topic].append(d)

    query_lines: list[str] = []
    qrels_lines: list[str] = []
    teacher_lines: list[str] = []
    for q in range(spec.queries):
        topic = q % t_count
        qid = f"q{q:04d}"
        rng = SplitMix64(substream(spec.seed, _QRY_TAG, q))
        n_tok = 3 + rng.below(4)
        tokens = [_draw_word(rng, query_cdf, topic * slice_len) for _ in range(n_tok)]
        query_lines.append(f"{qid}\t{' '.join(tokens)}\n")

        judged = topic_docs[topic]
        for d in judged:
            qrels_lines.append(f"{qid} 0 d{d:05d} {doc_grade[d]}\n")

        if len(judged) >= 2:
            noise_rng = SplitMix64(substream(spec.seed, _TCH_TAG, q))
            keyed = [
                (-(doc_grade[d] + spec.noise * noise_rng.gauss()), f"d{d:05d}")
                for d in judged
            ]
            keyed.sort()
            ranked = [doc for _, doc in keyed[:TEACHER_DEPTH]]
            teacher_lines.append(json.dumps({"qid": qid, "ranked": ranked}) + "\n")

    return SynthDataset(
        "".join(corpus_lines),
        "".join(query_lines),
        "".join(qrels_lines),
        "".join(teacher_lines),
    )


def write_dataset(dataset: SynthDataset, out_dir: str | Path) -> dict[str, Path]:
    """Write the four artifact files; returns their paths by artifact name."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "corpus": out / "corpus.tsv",
        "queries": out / "queries.tsv",
        "qrels": out / "qrels.txt",
        "teacher": out / "teacher.jsonl",
    }
    paths["corpus"].write_text(dataset.corpus_tsv, encoding="utf-8")
    paths["queries"].write_text(dataset.queries_tsv, encoding="utf-8")
    paths["qrels"].write_text(dataset.qrels_txt, encoding="utf-8")
    paths["teacher"].write_text(dataset.teacher_jsonl, encoding="utf-8")
    return paths
