"""Feature extraction, the two-layer scorer, gradients, and checkpoints."""

import math

import numpy as np
import pytest

from rankforge.data import Document, Query, parse_corpus
from rankforge.errors import DataError
from rankforge.retrieval import Bm25Params, bm25_score, build_index
from rankforge.scorer import (
    N_DENSE,
    ScorerConfig,
    ScorerGrads,
    ScorerParams,
    ScoringContext,
    backward_batch,
    extract_features,
    fnv1a64,
    init_params,
    load_params,
    save_params,
    score,
    score_backward,
    score_batch,
)


class TestFnv1a64:
    def test_published_vectors(self):
        assert fnv1a64(b"") == 0xCBF29CE484222325
        assert fnv1a64(b"a") == 0xAF63DC4C8601EC8C
        assert fnv1a64(b"foobar") == 0x85944171F73967E8


def _random_params(rng: np.random.Generator, buckets=8, hidden=3) -> ScorerParams:
    f = buckets + N_DENSE
    return ScorerParams(
        w1=rng.normal(size=(hidden, f)),
        b1=rng.normal(size=hidden),
        w2=rng.normal(size=hidden),
        b2=float(rng.normal()),
    )


def _random_x(rng: np.random.Generator, buckets=8) -> np.ndarray:
    return rng.normal(size=buckets + N_DENSE)


@pytest.fixture(scope="module")
def feature_world():
    corpus = parse_corpus("d1\tcat\nd2\tdog fox\nd3\tcat dog runs fast\n")
    return corpus, build_index(corpus)


class TestExtractFeatures:

    def test_full_overlap_f2(self, feature_world):
        corpus, index = feature_world
        x = extract_features(index, Bm25Params(), Query("q", "cat"), corpus.get("d1"), 16)
        assert x[1] == 1.0

    def test_disjoint_pair_zeros(self, feature_world):
        corpus, index = feature_world
        x = extract_features(index, Bm25Params(), Query("q", "owl"), corpus.get("d1"), 16)
        assert x[0] == 0.0 and x[1] == 0.0 and x[2] == 0.0 and x[5] == 0.0
        assert np.all(x[N_DENSE:] == 0.0)

    def test_hashed_block_norm_zero_or_one(self, feature_world):
        corpus, index = feature_world
        for qtext in ("cat", "owl", "cat dog", "dog fox cat"):
            for did in ("d1", "d2", "d3"):
                x = extract_features(
                    index, Bm25Params(), Query("q", qtext), corpus.get(did), 16
                )
                norm = float(np.linalg.norm(x[N_DENSE:]))
                assert norm == pytest.approx(0.0, abs=1e-15) or norm == pytest.approx(
                    1.0, rel=1e-12
                )

    def test_dense_feature_values(self, feature_world):
        corpus, index = feature_world
        q = Query("q", "cat dog")
        doc = corpus.get("d3")  # "cat dog runs fast"
        x = extract_features(index, Bm25Params(), q, doc, 16)
        bm = bm25_score(index, Bm25Params(), ["cat", "dog"], "d3")
        assert x[0] == pytest.approx(bm / (1 + bm), rel=1e-12)
        assert x[1] == 1.0  # both query terms present
        assert x[2] == pytest.approx(1.0, rel=1e-9)  # full idf overlap
        assert x[3] == pytest.approx(math.log1p(4) / 10, rel=1e-12)
        assert x[4] == pytest.approx(math.log1p(2) / 10, rel=1e-12)
        assert x[5] == 1.0  # bigram "cat dog" contiguous in doc

    def test_bigram_fraction_partial(self, feature_world):
        corpus, index = feature_world
        # "dog cat": doc d3 has "cat dog" but not "dog cat"
        x = extract_features(index, Bm25Params(), Query("q", "dog cat"), corpus.get("d3"), 16)
        assert x[5] == 0.0

    def test_bounded_features(self, feature_world):
        corpus, index = feature_world
        x = extract_features(index, Bm25Params(), Query("q", "cat dog"), corpus.get("d3"), 16)
        for i in (0, 1, 2, 5):
            assert 0.0 <= x[i] <= 1.0

    def test_purity(self, feature_world):
        corpus, index = feature_world
        q = Query("q", "cat dog")
        a = extract_features(index, Bm25Params(), q, corpus.get("d3"), 16)
        b = extract_features(index, Bm25Params(), q, corpus.get("d3"), 16)
        np.testing.assert_array_equal(a, b)


class TestScore:
    def test_zero_params_score_zero(self):
        params = ScorerParams(np.zeros((3, 14)), np.zeros(3), np.zeros(3), 0.0)
        assert score(params, np.ones(14)) == 0.0

    def test_bias_passthrough(self):
        params = ScorerParams(np.zeros((3, 14)), np.zeros(3), np.zeros(3), 1.0)
        assert score(params, np.ones(14)) == 1.0

    def test_matches_straight_line_formula(self):
        """Random cases against an independent evaluation of the formula."""
        rng = np.random.default_rng(7)
        for _ in range(50):
            params = _random_params(rng)
            x = _random_x(rng)
            expected = 0.0
            for j in range(params.hidden):
                pre = float(np.dot(params.w1[j], x)) + float(params.b1[j])
                expected += float(params.w2[j]) * math.tanh(pre)
            expected += params.b2
            assert score(params, x) == pytest.approx(expected, rel=1e-12)

    def test_dimension_mismatch(self):
        params = ScorerParams(np.zeros((2, 14)), np.zeros(2), np.zeros(2), 0.0)
        with pytest.raises(ValueError):
            score(params, np.ones(13))

    def test_batch_matches_single(self):
        rng = np.random.default_rng(8)
        params = _random_params(rng)
        xs = np.stack([_random_x(rng) for _ in range(6)])
        scores, _ = score_batch(params, xs)
        for i in range(6):
            assert scores[i] == pytest.approx(score(params, xs[i]), rel=1e-12)


class TestScoreBackward:
    def test_zero_upstream_zero_grad(self):
        rng = np.random.default_rng(9)
        params = _random_params(rng)
        g = score_backward(params, _random_x(rng), 0.0)
        assert np.all(g.w1 == 0) and np.all(g.b1 == 0) and np.all(g.w2 == 0)
        assert g.b2 == 0.0

    def test_b2_grad_equals_upstream(self):
        rng = np.random.default_rng(10)
        params = _random_params(rng)
        g = score_backward(params, _random_x(rng), 2.5)
        assert g.b2 == pytest.approx(2.5, rel=1e-15)

    def test_finite_differences(self):
        """Every parameter component vs central differences, step 1e-4."""
        rng = np.random.default_rng(11)
        step = 1e-4

        def check(analytic, est):
            # floor absorbs pure finite-difference noise at near-zero gradients
            denom = max(abs(est), abs(analytic), 1e-6)
            assert abs(analytic - est) / denom < 1e-5

        for case in range(10):
            params = _random_params(rng)
            x = _random_x(rng)
            upstream = float(rng.normal())
            g = score_backward(params, x, upstream)

            for j in range(params.hidden):
                for k in range(params.feature_dim):
                    orig = params.w1[j, k]
                    params.w1[j, k] = orig + step
                    hi = score(params, x)
                    params.w1[j, k] = orig - step
                    lo = score(params, x)
                    params.w1[j, k] = orig
                    check(g.w1[j, k], upstream * (hi - lo) / (2 * step))
            for j in range(params.hidden):
                for arr, garr in ((params.b1, g.b1), (params.w2, g.w2)):
                    orig = arr[j]
                    arr[j] = orig + step
                    hi = score(params, x)
                    arr[j] = orig - step
                    lo = score(params, x)
                    arr[j] = orig
                    check(garr[j], upstream * (hi - lo) / (2 * step))

    def test_batch_backward_sums_rows(self):
        rng = np.random.default_rng(12)
        params = _random_params(rng)
        xs = np.stack([_random_x(rng) for _ in range(5)])
        upstream = rng.normal(size=5)
        _, acts = score_batch(params, xs)
        batched = backward_batch(params, xs, acts, upstream)
        total = ScorerGrads.zeros_like(params)
        for i in range(5):
            total.add_(score_backward(params, xs[i], float(upstream[i])))
        np.testing.assert_allclose(batched.w1, total.w1, rtol=1e-12, atol=1e-14)
        np.testing.assert_allclose(batched.b1, total.b1, rtol=1e-12, atol=1e-14)
        np.testing.assert_allclose(batched.w2, total.w2, rtol=1e-12, atol=1e-14)
        assert batched.b2 == pytest.approx(total.b2, rel=1e-12)


class TestInitParams:
    def test_same_seed_identical(self):
        a = init_params(ScorerConfig(32, 4, seed=5))
        b = init_params(ScorerConfig(32, 4, seed=5))
        np.testing.assert_array_equal(a.w1, b.w1)
        np.testing.assert_array_equal(a.w2, b.w2)

    def test_different_seeds_differ(self):
        a = init_params(ScorerConfig(32, 4, seed=5))
        b = init_params(ScorerConfig(32, 4, seed=6))
        assert not np.array_equal(a.w1, b.w1)

    def test_glorot_bounds_and_zero_biases(self):
        cfg = ScorerConfig(32, 4, seed=5)
        p = init_params(cfg)
        f = cfg.feature_dim
        bound1 = math.sqrt(6.0 / (f + cfg.hidden))
        bound2 = math.sqrt(6.0 / (cfg.hidden + 1))
        assert np.all(np.abs(p.w1) <= bound1)
        assert np.all(np.abs(p.w2) <= bound2)
        assert np.all(p.b1 == 0.0)
        assert p.b2 == 0.0

    def test_config_validated(self):
        with pytest.raises(ValueError):
            ScorerConfig(0, 4)
        with pytest.raises(ValueError):
            ScorerConfig(4, 0)


class TestCheckpoint:
    def test_round_trip_bit_exact(self):
        p = init_params(ScorerConfig(16, 3, seed=1))
        q = load_params(save_params(p))
        assert np.array_equal(p.w1, q.w1)
        assert np.array_equal(p.b1, q.b1)
        assert np.array_equal(p.w2, q.w2)
        assert p.b2 == q.b2

    def test_truncated_stream_rejected(self):
        blob = save_params(init_params(ScorerConfig(16, 3, seed=1)))
        with pytest.raises(DataError):
            load_params(blob[:-8])

    def test_wrong_magic_rejected(self):
        blob = save_params(init_params(ScorerConfig(16, 3, seed=1)))
        with pytest.raises(DataError):
            load_params(b"XXXX" + blob[4:])

    def test_wrong_version_rejected(self):
        blob = bytearray(save_params(init_params(ScorerConfig(16, 3, seed=1))))
        blob[4] = 99
        with pytest.raises(DataError):
            load_params(bytes(blob))

    def test_buckets_property(self):
        p = init_params(ScorerConfig(16, 3, seed=1))
        assert p.buckets == 16
        assert p.feature_dim == 16 + N_DENSE


class TestScoringContext:
    def test_features_match_direct_extraction(self, tiny_corpus, tiny_index):
        ctx = ScoringContext(tiny_corpus, tiny_index, Bm25Params(), buckets=16)
        q = Query("q", "cat dog")
        via_ctx = ctx.features(q, "d2")
        direct = extract_features(
            tiny_index, Bm25Params(), q, tiny_corpus.get("d2"), 16
        )
        np.testing.assert_array_equal(via_ctx, direct)

    def test_memo_returns_same_array(self, tiny_corpus, tiny_index):
        ctx = ScoringContext(tiny_corpus, tiny_index, buckets=16)
        q = Query("q", "cat")
        assert ctx.features(q, "d1") is ctx.features(q, "d1")

    def test_missing_doc_raises(self, tiny_corpus, tiny_index):
        ctx = ScoringContext(tiny_corpus, tiny_index, buckets=16)
        with pytest.raises(DataError, match="d99"):
            ctx.features(Query("q", "cat"), "d99")

    def test_feature_matrix_rows(self, tiny_corpus, tiny_index):
        ctx = ScoringContext(tiny_corpus, tiny_index, buckets=16)
        q = Query("q", "cat")
        mat = ctx.feature_matrix(q, ["d1", "d2"])
        np.testing.assert_array_equal(mat[0], ctx.features(q, "d1"))
        np.testing.assert_array_equal(mat[1], ctx.features(q, "d2"))
