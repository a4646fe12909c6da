"""Point-wise differentiable relevance scorer.

A query-document pair is encoded as F = buckets + 6 interaction features:

  [0] bm25 / (1 + bm25)
  [1] |unique(q) & unique(d)| / max(1, |unique(q)|)
  [2] sum of idf over overlapping terms / max(eps, sum of idf over query terms)
  [3] ln(1 + doc token count) / 10
  [4] ln(1 + query token count) / 10
  [5] fraction of query bigrams appearing contiguously in the doc
  [6:] hashed overlap block: bucket fnv1a64(t) % buckets accumulates idf(t)
       for each overlapping term t, L2-normalized when nonzero

The scorer itself is a one-hidden-layer MLP, s = w2 . tanh(W1 x + b1) + b2,
small enough that its backward pass is written out exactly and checked
against finite differences.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .data import Corpus, Document, Query
from .errors import DataError
from .retrieval import Bm25Params, InvertedIndex, bm25_score, tokenize
from .rng import SplitMix64

_EPS = 1e-12

N_DENSE = 6  # dense interaction features ahead of the hashed block

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


def fnv1a64(data: bytes) -> int:
    """FNV-1a 64-bit hash (fixed so features are bit-exact across platforms)."""
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return h


@dataclass(frozen=True)
class ScorerConfig:
    buckets: int = 1024
    hidden: int = 16
    seed: int = 0

    def __post_init__(self):
        if self.buckets < 1 or self.hidden < 1:
            raise ValueError("buckets and hidden must be >= 1")

    @property
    def feature_dim(self) -> int:
        return self.buckets + N_DENSE


@dataclass
class ScorerParams:
    """Trainable parameters; w1 is (hidden, F), b1/w2 are (hidden,), b2 scalar."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: float

    @property
    def hidden(self) -> int:
        return self.w1.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def buckets(self) -> int:
        return self.w1.shape[1] - N_DENSE

    def copy(self) -> "ScorerParams":
        return ScorerParams(self.w1.copy(), self.b1.copy(), self.w2.copy(), float(self.b2))


@dataclass
class ScorerGrads:
    """Parameter gradients, same shapes as ScorerParams."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: float

    @staticmethod
    def zeros_like(params: ScorerParams) -> "ScorerGrads":
        return ScorerGrads(
            np.zeros_like(params.w1),
            np.zeros_like(params.b1),
            np.zeros_like(params.w2),
            0.0,
        )

    def add_(self, other: "ScorerGrads") -> None:
        self.w1 += other.w1
        self.b1 += other.b1
        self.w2 += other.w2
        self.b2 += other.b2


def extract_features(
    index: InvertedIndex,
    params: Bm25Params,
    query: Query,
    doc: Document,
    buckets: int = 1024,
) -> np.ndarray:
    """Feature vector for one query-document pair (layout in module docstring)."""
    q_tokens = tokenize(query.text)
    d_tokens = tokenize(doc.text)
    q_set = set(q_tokens)
    d_set = set(d_tokens)
    overlap = q_set & d_set

    x = np.zeros(buckets + N_DENSE, dtype=np.float64)

    bm25 = bm25_score(index, params, q_tokens, doc.id)
    x[0] = bm25 / (1.0 + bm25)
    x[1] = len(overlap) / max(1, len(q_set))
    # sorted iteration: accumulation order must not depend on the process
    # hash seed or the result is not bit-reproducible across runs
    idf_q = sum(index.idf(t) for t in sorted(q_set))
    idf_overlap = sum(index.idf(t) for t in sorted(overlap))
    x[2] = idf_overlap / max(_EPS, idf_q)
    x[3] = math.log1p(len(d_tokens)) / 10.0
    x[4] = math.log1p(len(q_tokens)) / 10.0
    if len(q_tokens) >= 2:
        d_bigrams = set(zip(d_tokens, d_tokens[1:]))
        q_bigrams = list(zip(q_tokens, q_tokens[1:]))
        x[5] = sum(bg in d_bigrams for bg in q_bigrams) / len(q_bigrams)

    block = x[N_DENSE:]
    for t in sorted(overlap):
        block[fnv1a64(t.encode("utf-8")) % buckets] += index.idf(t)
    norm = math.sqrt(float(np.dot(block, block)))
    if norm > 0.0:
        block /= norm
    return x


def score(params: ScorerParams, x: np.ndarray) -> float:
    """s = w2 . tanh(W1 x + b1) + b2."""
    if x.shape != (params.feature_dim,):
        raise ValueError(f"feature dim {x.shape} does not match params {params.feature_dim}")
    return float(params.w2 @ np.tanh(params.w1 @ x + params.b1) + params.b2)


def score_backward(params: ScorerParams, x: np.ndarray, upstream: float) -> ScorerGrads:
    """Exact gradient of the score w.r.t. every parameter, scaled by upstream."""
    if x.shape != (params.feature_dim,):
        raise ValueError(f"feature dim {x.shape} does not match params {params.feature_dim}")
    a = np.tanh(params.w1 @ x + params.b1)
    dz = upstream * params.w2 * (1.0 - a * a)
    return ScorerGrads(np.outer(dz, x), dz, upstream * a, upstream)


def score_batch(params: ScorerParams, x_mat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Scores for a (n, F) feature matrix; also returns hidden activations for backward."""
    a = np.tanh(x_mat @ params.w1.T + params.b1)
    return a @ params.w2 + params.b2, a


def backward_batch(
    params: ScorerParams, x_mat: np.ndarray, activations: np.ndarray, upstream: np.ndarray
) -> ScorerGrads:
    """Gradient of sum_i upstream_i * s_i w.r.t. parameters (batched score_backward)."""
    dz = (upstream[:, None] * params.w2[None, :]) * (1.0 - activations * activations)
    return ScorerGrads(
        dz.T @ x_mat,
        dz.sum(axis=0),
        activations.T @ upstream,
        float(upstream.sum()),
    )


def init_params(config: ScorerConfig) -> ScorerParams:
    """Glorot-uniform init, zero biases, deterministic per seed.

    A single splitmix64 stream fills W1 row-major then w2, so the layout is
    reproducible bit-for-bit.
    """
    rng = SplitMix64(config.seed)
    f = config.feature_dim
    m = config.hidden

    def uniform_block(n: int, limit: float) -> np.ndarray:
        return np.array([(2.0 * rng.uniform() - 1.0) * limit for _ in range(n)])

    lim1 = math.sqrt(6.0 / (f + m))
    w1 = uniform_block(m * f, lim1).reshape(m, f)
    lim2 = math.sqrt(6.0 / (m + 1))
    w2 = uniform_block(m, lim2)
    return ScorerParams(w1, np.zeros(m), w2, 0.0)


_MAGIC = b"RFCP"
_VERSION = 1
_HEADER = struct.Struct("<4sHII")  # magic, version, buckets, hidden


def save_params(params: ScorerParams) -> bytes:
    """Serialize to the versioned little-endian checkpoint format."""
    m, f = params.w1.shape
    buckets = f - N_DENSE
    header = _HEADER.pack(_MAGIC, _VERSION, buckets, m)
    body = b"".join(
        arr.astype("<f8").tobytes()
        for arr in (params.w1.ravel(), params.b1, params.w2, np.array([params.b2]))
    )
    return header + body


def load_params(blob: bytes) -> ScorerParams:
    """Inverse of save_params; rejects bad magic, version, or truncation."""
    if len(blob) < _HEADER.size:
        raise DataError("checkpoint truncated: header incomplete")
    magic, version, buckets, m = _HEADER.unpack_from(blob)
    if magic != _MAGIC:
        raise DataError(f"not a scorer checkpoint (magic {magic!r})")
    if version != _VERSION:
        raise DataError(f"unsupported checkpoint version {version}")
    f = buckets + N_DENSE
    expected = _HEADER.size + 8 * (m * f + m + m + 1)
    if len(blob) != expected:
        raise DataError(f"checkpoint length {len(blob)} != expected {expected}")
    vals = np.frombuffer(blob, dtype="<f8", offset=_HEADER.size).astype(np.float64)
    w1, rest = vals[: m * f].reshape(m, f), vals[m * f :]
    return ScorerParams(w1.copy(), rest[:m].copy(), rest[m : 2 * m].copy(), float(rest[2 * m]))


class ScoringContext:
    """Bundles corpus, index, and BM25 params; memoizes feature extraction.

    Feature vectors are pure functions of (query, doc), so the memo never
    invalidates. Shared read-only across systems being compared.
    """

    def __init__(self, corpus: Corpus, index: InvertedIndex,
                 bm25: Bm25Params | None = None, buckets: int = 1024):
        self.corpus = corpus
        self.index = index
        self.bm25 = bm25 if bm25 is not None else Bm25Params()
        self.buckets = buckets
        self._memo: dict[tuple[str, str], np.ndarray] = {}

    def features(self, query: Query, doc_id: str) -> np.ndarray:
        key = (query.id, doc_id)
        cached = self._memo.get(key)
        if cached is None:
            if doc_id not in self.corpus:
                raise DataError(f"query {query.id}: document {doc_id!r} has no text in corpus")
            cached = extract_features(
                self.index, self.bm25, query, self.corpus.get(doc_id), self.buckets
            )
            self._memo[key] = cached
        return cached

    def feature_matrix(self, query: Query, doc_ids: list[str]) -> np.ndarray:
        return np.stack([self.features(query, d) for d in doc_ids])
