import json
import sys
from pathlib import Path

import numpy as np
import pytest

from spanmine.embedding import (
    EmbeddingMatrix,
    ExternalEncoder,
    ExternalEncoderError,
    StaticVectorEncoder,
    TokenSequence,
    ToyEncoder,
    ToyEncoderParams,
    decode_responses,
    encode,
    fnv1a_64,
    make_encoder,
    read_embeddings,
    tokenize,
    toy_base_vectors,
    toy_contextualize,
    toy_contextualize_array,
    toy_contextualize_backward,
    write_embeddings,
)

ECHO = [sys.executable, str(Path(__file__).with_name("echo_encoder.py"))]


class TestTokenize:
    def test_empty(self):
        assert len(tokenize("")) == 0
        assert len(tokenize("  \n\t ")) == 0

    def test_whitespace_split_with_offsets(self):
        toks = tokenize("A group of men")
        assert toks.texts == ["a", "group", "of", "men"]
        assert [(t.start, t.end) for t in toks] == [(0, 1), (2, 7), (8, 10), (11, 14)]

    def test_strips_edge_punctuation_only(self):
        assert tokenize("in mid-air flight.").texts == ["in", "mid-air", "flight"]

    def test_offsets_point_into_original(self):
        text = '"Hello," she said — (quietly)...'
        for tok in tokenize(text):
            assert text[tok.start : tok.end].lower() == tok.text

    def test_pure_punctuation_dropped(self):
        assert tokenize("a -- b !!").texts == ["a", "b"]

    def test_unicode_whitespace(self):
        assert tokenize("café au lait").texts == ["café", "au", "lait"]

    def test_invalid_sequence_rejected(self):
        with pytest.raises(ValueError):
            TokenSequence((("b", 3, 4), ("a", 0, 1)))
        with pytest.raises(ValueError):
            TokenSequence((("", 0, 1),))


def test_fnv1a_reference_vectors():
    # published FNV-1a 64-bit test vectors
    assert fnv1a_64(b"") == 0xCBF29CE484222325
    assert fnv1a_64(b"a") == 0xAF63DC4C8601EC8C
    assert fnv1a_64(b"foobar") == 0x85944171F73967E8


class TestToyEncoder:
    def test_repeated_token_rows_identical_and_unit(self):
        p = ToyEncoderParams(seed=3)
        m = toy_base_vectors(tokenize("beach and the beach"), p)
        np.testing.assert_array_equal(m.rows[0], m.rows[3])
        np.testing.assert_allclose(np.linalg.norm(m.rows, axis=1), 1.0, atol=1e-6)

    def test_seed_changes_vectors(self):
        a = toy_base_vectors(["soccer"], ToyEncoderParams(seed=7)).rows
        b = toy_base_vectors(["soccer"], ToyEncoderParams(seed=8)).rows
        assert not np.allclose(a, b)

    def test_identity_params(self, rng):
        base = EmbeddingMatrix(rng.standard_normal((5, 8)))
        p = ToyEncoderParams(d=8, window=2, A=np.eye(8), B=np.zeros((8, 8)))
        np.testing.assert_array_equal(toy_contextualize(base, p).rows, base.rows)

    def test_single_token_has_no_context(self, rng):
        p = ToyEncoderParams(d=8, window=3, seed=1)
        e = rng.standard_normal((1, 8))
        np.testing.assert_allclose(toy_contextualize_array(e, p), e @ p.A.T)

    def test_neighbour_mean_by_hand(self, rng):
        p = ToyEncoderParams(d=4, window=2, seed=2)
        e = rng.standard_normal((3, 4))
        v = toy_contextualize_array(e, p)
        # middle token: neighbours are rows 0 and 2
        np.testing.assert_allclose(v[1], p.A @ e[1] + p.B @ ((e[0] + e[2]) / 2))
        # first token: neighbours 1 and 2
        np.testing.assert_allclose(v[0], p.A @ e[0] + p.B @ ((e[1] + e[2]) / 2))

    def test_window_one_long_sequence(self, rng):
        p = ToyEncoderParams(d=3, window=1, seed=4)
        e = rng.standard_normal((6, 3))
        v = toy_contextualize_array(e, p)
        for i in range(6):
            nb = [j for j in (i - 1, i + 1) if 0 <= j < 6]
            np.testing.assert_allclose(v[i], p.A @ e[i] + p.B @ e[nb].mean(axis=0))

    def test_linearity_zero_window(self, rng):
        p = ToyEncoderParams(d=6, window=0, seed=5)
        x = rng.standard_normal((4, 6))
        np.testing.assert_allclose(toy_contextualize_array(2.5 * x, p), 2.5 * toy_contextualize_array(x, p))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension"):
            toy_contextualize(EmbeddingMatrix(np.ones((2, 3))), ToyEncoderParams(d=4))

    def test_backward_matches_finite_differences(self, rng):
        p = ToyEncoderParams(d=5, window=2, seed=6, mix=0.7)
        e = rng.standard_normal((7, 5))
        g = rng.standard_normal((7, 5))

        def f(a, b, ee):
            q = ToyEncoderParams(d=5, window=2, A=a, B=b)
            return float(np.sum(toy_contextualize_array(ee, q) * g))

        d_a, d_b, d_e = toy_contextualize_backward(e, p, g)
        h = 1e-6
        for target, grad, idx in ((p.A, d_a, (1, 3)), (p.B, d_b, (4, 0)), (e, d_e, (2, 2)), (e, d_e, (0, 4))):
            plus, minus = target.copy(), target.copy()
            plus[idx] += h
            minus[idx] -= h
            args_p = [plus if target is x else x for x in (p.A, p.B, e)]
            args_m = [minus if target is x else x for x in (p.A, p.B, e)]
            fd = (f(*args_p) - f(*args_m)) / (2 * h)
            assert grad[idx] == pytest.approx(fd, rel=1e-6, abs=1e-8)

    def test_encode_deterministic(self):
        text = "A group of boys are playing soccer on the beach."
        t1, m1 = encode(text, ToyEncoder(ToyEncoderParams(seed=11)))
        t2, m2 = encode(text, ToyEncoder(ToyEncoderParams(seed=11)))
        assert t1 == t2
        assert m1.rows.tobytes() == m2.rows.tobytes()
        assert m1.n == len(t1) and m1.rows.dtype == np.float32

    def test_encode_equals_pipeline(self):
        p = ToyEncoderParams(seed=9)
        text = "blue and red plane in mid-air flight"
        _, m = ToyEncoder(p).encode(text)
        expect = toy_contextualize(toy_base_vectors(tokenize(text), p), p)
        np.testing.assert_array_equal(m.rows, expect.rows)


class TestStaticVectors:
    def test_lookup_and_unknown(self, tmp_path):
        path = tmp_path / "vec.txt"
        path.write_text("2 3\ncat 1 0 0\nsat 0 1.5 -2\n", encoding="utf-8")
        enc = StaticVectorEncoder.from_file(path)
        tokens, m = enc.encode("Cat sat quietly.")
        assert tokens.texts == ["cat", "sat", "quietly"]
        np.testing.assert_array_equal(m.rows, [[1, 0, 0], [0, 1.5, -2], [0, 0, 0]])
        assert m.unknown.tolist() == [False, False, True]

    def test_headerless_file(self, tmp_path):
        path = tmp_path / "vec.txt"
        path.write_text("a 1 2\nb 3 4\n", encoding="utf-8")
        enc = make_encoder(f"static:{path}")
        assert enc.dim == 2
        np.testing.assert_array_equal(enc.encode("b a")[1].rows, [[3, 4], [1, 2]])


class TestExternalEncoder:
    def test_echo_round_trip(self):
        text = "late interaction over spans"
        tokens, m = ExternalEncoder(ECHO).encode(text, "doc-1")
        assert tokens.texts == text.split()
        expect = [[len(w), i, len("doc-1")] for i, w in enumerate(text.split())]
        np.testing.assert_array_equal(m.rows, expect)

    def test_batch_preserves_order(self):
        out = ExternalEncoder(ECHO).encode_many(["a b", "c", "d e f"], ["x", "yy", "zzz"])
        assert [m.doc_id for _, m in out] == ["x", "yy", "zzz"]
        assert [m.n for _, m in out] == [2, 1, 3]

    def test_failing_command(self):
        enc = ExternalEncoder([sys.executable, "-c", "import sys; sys.exit(3)"])
        with pytest.raises(ExternalEncoderError, match="exited with 3"):
            enc.encode("x")

    def test_id_mismatch(self):
        payload = json.dumps({"id": "other", "tokens": [], "vectors": []})
        with pytest.raises(ExternalEncoderError, match="id"):
            decode_responses(payload, ["mine"])

    def test_row_count_mismatch(self):
        payload = json.dumps({"id": "a", "tokens": [{"text": "x", "start": 0, "end": 1}], "vectors": [[1.0], [2.0]]})
        with pytest.raises(ExternalEncoderError):
            decode_responses(payload, ["a"])


def test_exchange_file_round_trip(tmp_path, rng):
    enc = ToyEncoder(ToyEncoderParams(d=16, seed=1))
    docs = [enc.encode(t, doc_id=f"d{i}") for i, t in enumerate(["one two three", "", "naïve café ☕ text"])]
    path = tmp_path / "emb.saem"
    write_embeddings(path, docs)
    assert path.read_bytes()[:4] == b"SAEM"
    back = read_embeddings(path)
    assert len(back) == 3
    for (t1, m1), (t2, m2) in zip(docs, back):
        assert t1 == t2 and m1.doc_id == m2.doc_id
        np.testing.assert_array_equal(m1.rows, m2.rows)


def test_embedding_matrix_rejects_nan():
    with pytest.raises(ValueError, match="non-finite"):
        EmbeddingMatrix(np.array([[0.0, np.nan]]))
