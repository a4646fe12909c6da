"""Tokenization, inverted index, and BM25 first-stage retrieval.

BM25 uses the Lucene-style non-negative idf
``ln(1 + (N - df + 0.5) / (df + 0.5))`` with defaults k1=0.9, b=0.4. No
stemming or stopword removal; ties broken by ascending doc id so retrieval
is deterministic everywhere.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterable, Mapping

from .data import Corpus, Ranking, Query

_TOKEN = re.compile(r"[^\W_]+")  # maximal runs of alphanumeric code points


def tokenize(text: str) -> list[str]:
    """Lowercased alphanumeric runs, in order of appearance."""
    return _TOKEN.findall(text.lower())


@dataclass(frozen=True)
class Bm25Params:
    k1: float = 0.9
    b: float = 0.4

    def __post_init__(self):
        if self.k1 <= 0:
            raise ValueError(f"k1 must be > 0, got {self.k1}")
        if not 0.0 <= self.b <= 1.0:
            raise ValueError(f"b must be in [0, 1], got {self.b}")


@dataclass(frozen=True)
class InvertedIndex:
    """Immutable term -> (doc, tf) index with the stats BM25 needs."""

    postings: Mapping[str, Mapping[str, int]]  # term -> {doc_id: tf}
    doc_lengths: Mapping[str, int]
    avg_doc_length: float
    size: int

    def df(self, term: str) -> int:
        return len(self.postings.get(term, ()))

    def tf(self, term: str, doc_id: str) -> int:
        return self.postings.get(term, {}).get(doc_id, 0)

    def idf(self, term: str) -> float:
        """Lucene-style smoothed idf; 0 for unseen terms in an empty index."""
        df = self.df(term)
        return math.log(1.0 + (self.size - df + 0.5) / (df + 0.5))

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self.doc_lengths


def build_index(corpus: Corpus) -> InvertedIndex:
    """Index a corpus. Deterministic: postings follow corpus document order."""
    postings: dict[str, dict[str, int]] = {}
    doc_lengths: dict[str, int] = {}
    total = 0
    for doc in corpus:
        tokens = tokenize(doc.text)
        doc_lengths[doc.id] = len(tokens)
        total += len(tokens)
        for t in tokens:
            bucket = postings.setdefault(t, {})
            bucket[doc.id] = bucket.get(doc.id, 0) + 1
    n = len(doc_lengths)
    avg = total / n if n else 0.0
    return InvertedIndex(postings, doc_lengths, avg, n)


def bm25_score(
    index: InvertedIndex,
    params: Bm25Params,
    query_tokens: Iterable[str],
    doc_id: str,
) -> float:
    """BM25 score of one document against query tokens.

    Each query token occurrence contributes
    ``idf(t) * tf*(k1+1) / (tf + k1*(1 - b + b*len/avglen))``; repeating a
    term in the query therefore scales its contribution.
    """
    if doc_id not in index.doc_lengths:
        raise ValueError(f"doc id {doc_id!r} not in index")
    length = index.doc_lengths[doc_id]
    norm = params.k1 * (1.0 - params.b + params.b * length / index.avg_doc_length) \
        if index.avg_doc_length > 0 else params.k1
    score = 0.0
    for t in query_tokens:
        tf = index.tf(t, doc_id)
        if tf == 0:
            continue
        score += index.idf(t) * tf * (params.k1 + 1.0) / (tf + norm)
    return score


def retrieve_topk(
    index: InvertedIndex, params: Bm25Params, query: Query, k: int
) -> Ranking:
    """Top-k BM25 retrieval; candidates are docs sharing >= 1 query term.

    Ties broken by ascending doc id. Depth is min(k, candidate count).
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    tokens = tokenize(query.text)
    scores: dict[str, float] = {}
    for t in tokens:
        plist = index.postings.get(t)
        if not plist:
            continue
        idf = index.idf(t)
        for doc_id, tf in plist.items():
            length = index.doc_lengths[doc_id]
            norm = params.k1 * (1.0 - params.b + params.b * length / index.avg_doc_length)
            scores[doc_id] = scores.get(doc_id, 0.0) + idf * tf * (params.k1 + 1.0) / (tf + norm)
    top = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))[:k]
    return Ranking.from_scores(query.id, top)
