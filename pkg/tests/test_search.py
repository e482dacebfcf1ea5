import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spanmine.embedding import EmbeddingMatrix, ToyEncoder, ToyEncoderParams, tokenize
from spanmine.search import (
    DegenerateVectorWarning,
    best_span_match,
    normalized_cosine,
    query_vector,
    top_k_search,
)
from spanmine.spans import SpanConfig, SpanIndex

from oracles import best_span_oracle as oracle_best

vectors = st.lists(st.floats(-10, 10), min_size=3, max_size=3).map(np.array)




class TestNormalizedCosine:
    def test_basic_values(self):
        assert normalized_cosine([1, 0], [1, 0]) == 1.0
        assert normalized_cosine([1, 0], [-1, 0]) == 0.0
        assert normalized_cosine([1, 0], [0, 1]) == 0.5

    def test_zero_vector_warns(self):
        with pytest.warns(DegenerateVectorWarning):
            assert normalized_cosine([0, 0], [1, 0]) == 0.0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            normalized_cosine([1, 0], [1, 0, 0])

    @given(vectors, vectors, st.floats(0.01, 100), st.floats(0.01, 100))
    def test_scale_invariance_symmetry_range(self, u, v, alpha, beta):
        if np.linalg.norm(u) < 1e-3 or np.linalg.norm(v) < 1e-3:
            return
        s = normalized_cosine(u, v)
        assert 0.0 <= s <= 1.0
        assert s == pytest.approx(normalized_cosine(v, u), abs=1e-12)
        assert s == pytest.approx(normalized_cosine(alpha * u, beta * v), abs=1e-12)


def _index(rows, cfg, text=None, strategy="mean", mode="lazy"):
    n = len(rows)
    tokens = tokenize(text) if text else tokenize(" ".join(f"t{i}" for i in range(n)))
    return SpanIndex(tokens, EmbeddingMatrix(rows, doc_id="d"), cfg, strategy, mode, text=text)


class TestBestSpan:
    def test_planted_phrase_identity_encoder(self):
        enc = ToyEncoder(ToyEncoderParams.identity(d=64))
        text = "Catching a glimpse of the ocean, a group of boys are playing soccer on the beach today"
        query = "a group of boys are playing soccer"
        tokens, m = enc.encode(text)
        _, qm = enc.encode(query)
        hit = best_span_match(query_vector(qm), SpanIndex(tokens, m, SpanConfig(1, 20), text=text))
        assert hit.score == pytest.approx(1.0, abs=1e-6)
        assert text[hit.char_start : hit.char_end] == query
        assert hit.text == query

    def test_short_document_gives_none(self):
        ix = _index(np.ones((2, 3)), SpanConfig(3, 5))
        assert best_span_match(np.ones(3), ix) is None

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            best_span_match(np.ones(4), _index(np.ones((3, 3)), SpanConfig(1, 2)))

    def test_random_document_matches_oracle(self, rng):
        rows = rng.standard_normal((30, 8)).astype(np.float32)
        q = rng.standard_normal(8)
        hit = best_span_match(q, _index(rows, SpanConfig(1, 5)))
        s, e, c = oracle_best(q, rows.astype(np.float64), 1, 5)
        assert (hit.span.start, hit.span.end) == (s, e)
        assert hit.score == pytest.approx(c, abs=1e-9)

    def test_ties_go_to_first_span(self):
        # repeated identical tokens: every single-token span ties
        rows = np.tile([[1.0, 2.0, 0.5]], (6, 1))
        hit = best_span_match(np.array([1.0, 2.0, 0.5]), _index(rows, SpanConfig(1, 3)))
        assert (hit.span.start, hit.span.end) == (0, 1)

    def test_endpoint_strategy(self, rng):
        rows = rng.standard_normal((10, 4))
        q = np.concatenate([rows[3], rows[6]])
        hit = best_span_match(q, _index(rows, SpanConfig(1, 8), strategy="endpoint"))
        assert (hit.span.start, hit.span.end) == (3, 7)
        assert hit.score == pytest.approx(1.0, abs=1e-6)

    def test_zero_rows_score_zero(self):
        rows = np.zeros((4, 3))
        rows[2] = [1, 0, 0]
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            hit = best_span_match(np.array([-1.0, 0, 0]), _index(rows, SpanConfig(1, 1)))
        assert hit.score == 0.0 and hit.span.start == 0

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 25), st.integers(1, 4), st.integers(0, 4), st.integers(0, 2**31))
    def test_enlarging_config_never_lowers_score(self, n, a, extra, seed):
        r = np.random.default_rng(seed)
        rows, q = r.standard_normal((n, 5)), r.standard_normal(5)
        small = best_span_match(q, _index(rows, SpanConfig(a, a + extra)))
        large = best_span_match(q, _index(rows, SpanConfig(max(1, a - 1), a + extra + 2)))
        if small is not None:
            assert large.score >= small.score - 1e-12


class TestTopK:
    def _corpus(self, rng, count=10):
        return [
            SpanIndex(tokenize(" ".join(["w"] * 12)), EmbeddingMatrix(rng.standard_normal((12, 6)), doc_id=f"doc{i:02d}"),
                      SpanConfig(1, 4))
            for i in range(count)
        ]

    def test_single_document(self, rng):
        corpus = self._corpus(rng, 1)
        q = rng.standard_normal(6)
        assert top_k_search(q, corpus, 1) == [best_span_match(q, corpus[0])]

    def test_k_larger_than_corpus(self, rng):
        corpus = self._corpus(rng, 3)
        assert len(top_k_search(rng.standard_normal(6), corpus, 10)) == 3

    def test_matches_sorted_oracle(self, rng):
        corpus = self._corpus(rng)
        q = rng.standard_normal(6)
        maxima = []
        for ix in corpus:
            s, e, c = oracle_best(q, ix.matrix.rows.astype(np.float64), 1, 4)
            maxima.append((c, ix.doc_id, s, e))
        maxima.sort(key=lambda x: (-x[0], x[1]))
        got = top_k_search(q, corpus, 5)
        assert [(h.doc_id, h.span.start, h.span.end) for h in got] == [(d, s, e) for _, d, s, e in maxima[:5]]
        assert all(h.score == pytest.approx(c, abs=1e-9) for h, (c, *_) in zip(got, maxima))

    def test_score_ties_ordered_by_doc_id(self, rng):
        rows = rng.standard_normal((5, 3))
        corpus = [SpanIndex(None, EmbeddingMatrix(rows, doc_id=name), SpanConfig(1, 2)) for name in ("b", "c", "a")]
        assert [h.doc_id for h in top_k_search(rng.standard_normal(3), corpus, 3)] == ["a", "b", "c"]

    def test_empty_corpus_and_bad_k(self, rng):
        assert top_k_search(np.ones(3), [], 5) == []
        with pytest.raises(ValueError):
            top_k_search(np.ones(3), [], 0)

    def test_threads_same_result(self, rng, monkeypatch):
        corpus = self._corpus(rng)
        q = rng.standard_normal(6)
        monkeypatch.setenv("SPANMINE_THREADS", "1")
        serial = top_k_search(q, corpus, 10)
        monkeypatch.setattr("os.cpu_count", lambda: 4)
        monkeypatch.setenv("SPANMINE_THREADS", "4")
        assert top_k_search(q, corpus, 10) == serial
