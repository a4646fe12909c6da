"""Shared fixtures: a tiny hand-built corpus and a small generated world."""

from dataclasses import dataclass

import pytest

from rankforge.data import (
    Corpus,
    Qrels,
    Query,
    Ranking,
    TeacherRanking,
    parse_corpus,
    parse_qrels,
    parse_queries,
    parse_teacher,
)
from rankforge.retrieval import Bm25Params, InvertedIndex, build_index, retrieve_topk
from rankforge.scorer import ScorerConfig, ScoringContext
from rankforge.synth import SynthSpec, generate
from rankforge.training import QueryExample

TINY_CORPUS_TSV = (
    "d1\tthe cat sat on the mat\n"
    "d2\tthe dog chased the cat\n"
    "d3\ta bird sang in the tree\n"
    "d4\tcat cat cat everywhere\n"
    "d5\tdogs and birds share the park\n"
)


@pytest.fixture(scope="session")
def tiny_corpus() -> Corpus:
    return parse_corpus(TINY_CORPUS_TSV)


@pytest.fixture(scope="session")
def tiny_index(tiny_corpus) -> InvertedIndex:
    return build_index(tiny_corpus)


@dataclass
class SynthWorld:
    """Parsed small synthetic dataset plus retrieval scaffolding."""

    corpus: Corpus
    queries: list[Query]
    qrels: Qrels
    teachers: dict[str, TeacherRanking]
    index: InvertedIndex
    ctx: ScoringContext
    scorer_config: ScorerConfig
    rankings: dict[str, Ranking]
    examples: list[QueryExample]


SMALL_SPEC = SynthSpec(
    vocab_size=800, topics=4, docs_per_topic=25, queries=40, noise=0.5, seed=7
)
SMALL_SCORER = ScorerConfig(buckets=64, hidden=8, seed=11)


def _positive_for(qrels: Qrels, qid: str) -> str:
    judged = qrels.docs_for(qid)
    return min((d for d, g in judged.items() if g >= 1),
               key=lambda d: (-judged[d], d))


@pytest.fixture(scope="session")
def small_world() -> SynthWorld:
    ds = generate(SMALL_SPEC)
    corpus = parse_corpus(ds.corpus_tsv)
    queries = parse_queries(ds.queries_tsv)
    qrels = parse_qrels(ds.qrels_txt)
    teachers = {t.query_id: t for t in parse_teacher(ds.teacher_jsonl)}
    index = build_index(corpus)
    ctx = ScoringContext(corpus, index, Bm25Params(), buckets=SMALL_SCORER.buckets)
    rankings = {q.id: retrieve_topk(index, Bm25Params(), q, 50) for q in queries}
    examples = [
        QueryExample(
            query=q,
            positive_id=_positive_for(qrels, q.id),
            ranking=rankings[q.id],
            teacher=teachers.get(q.id),
        )
        for q in queries
    ]
    return SynthWorld(
        corpus, queries, qrels, teachers, index, ctx, SMALL_SCORER, rankings, examples
    )
