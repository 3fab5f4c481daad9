from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multiretriever.errors import CorruptIndex, DimMismatch, DuplicateId, EmptyCorpus, EmptyIndex, InvalidParam
from multiretriever.index import (
    DenseIndex, bm25_build_index, bm25_query, dense_index_add, dense_topk, jaccard_similarity,
    persist_index, restore_index, tokenize_code,
)
from multiretriever.vectors import EmbeddingVector

from .conftest import make_snippet


def _docs(*texts: str):
    return [make_snippet(t, name=f"d{i + 1}.java") for i, t in enumerate(texts)]


# ---------------------------------------------------------------- tokenizer and Jaccard

@pytest.mark.parametrize("text, tokens", [
    ("getDefault(x_1)", ["get", "default", "x", "1"]),
    ("", []),
    ("HTTPServer.start()", ["http", "server", "start"]),
    ("snake_case_name", ["snake", "case", "name"]),
])
def test_tokenize(text, tokens):
    assert tokenize_code(text) == tokens


def test_jaccard_fixtures():
    assert jaccard_similarity(tokenize_code("foo bar baz"), tokenize_code("bar baz qux")) == 0.5
    assert jaccard_similarity(["a"], ["a"]) == 1.0
    assert jaccard_similarity([], []) == 1.0
    assert jaccard_similarity(["a"], []) == 0.0
    assert jaccard_similarity(["a", "a", "b"], ["a", "b"]) == 1.0


@given(st.lists(st.sampled_from("abcdef"), max_size=8), st.lists(st.sampled_from("abcdef"), max_size=8))
def test_jaccard_bounds_and_symmetry(a, b):
    j = jaccard_similarity(a, b)
    assert 0.0 <= j <= 1.0
    assert j == jaccard_similarity(b, a)


# ---------------------------------------------------------------- BM25

def test_bm25_statistics():
    idx = bm25_build_index(_docs("a b", "b c"))
    assert idx.n_docs == 2
    assert idx.doc_freq["b"] == 2
    assert idx.avg_doc_length == 2
    single = bm25_build_index(_docs("x y z"))
    assert single.avg_doc_length == 3
    assert bm25_build_index(_docs("a b", "b c")) == idx


def test_bm25_hand_computed_score():
    docs = _docs("a b", "b c")
    idx = bm25_build_index(docs)
    [(sid, score)] = bm25_query(idx, "c", 1)
    assert sid == docs[1].snippet_id
    assert score == pytest.approx(math.log(2), abs=1e-12)


def test_bm25_absent_term_scores_zero_and_returns_k():
    idx = bm25_build_index(_docs("a b", "b c", "c d"))
    hits = bm25_query(idx, "zzz", 2)
    assert len(hits) == 2
    assert [s for _, s in hits] == [0.0, 0.0]
    assert [i for i, _ in hits] == sorted(i for i, _ in hits)


def bm25_oracle(docs: list[list[str]], query: list[str], k1=1.2, b=0.75) -> list[float]:
    """Direct transcription of Okapi BM25 with the Lucene idf, no shared code."""
    n = len(docs)
    avgdl = sum(len(d) for d in docs) / n
    out = []
    for d in docs:
        s = 0.0
        for q in query:
            df = sum(1 for e in docs if q in e)
            idf = math.log(1 + (n - df + 0.5) / (df + 0.5))
            tf = d.count(q)
            s += idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len(d) / avgdl))
        out.append(s)
    return out


words = st.sampled_from(["alpha", "beta", "gamma", "delta", "eps"])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.lists(words, min_size=1, max_size=8), min_size=1, max_size=8),
       st.lists(words, min_size=1, max_size=4))
def test_bm25_matches_oracle(doc_words, query_words):
    docs = _docs(*(" ".join(w) for w in doc_words))
    idx = bm25_build_index(docs)
    expected = bm25_oracle(doc_words, query_words)
    got = idx.score_all(query_words)
    for d, e in zip(docs, expected):
        assert got[d.snippet_id] == pytest.approx(e, rel=1e-12, abs=1e-12)
    hits = bm25_query(idx, " ".join(query_words), len(docs))
    assert [s for _, s in hits] == sorted((s for _, s in hits), reverse=True)


def test_bm25_query_rejects_bad_k_and_empty():
    with pytest.raises(InvalidParam):
        bm25_query(bm25_build_index(_docs("a")), "a", 0)
    with pytest.raises(EmptyCorpus):
        bm25_build_index([])


# ---------------------------------------------------------------- dense

def _vec(*v: float) -> EmbeddingVector:
    return EmbeddingVector.of(v)


def _two_rows() -> DenseIndex:
    idx = DenseIndex(2)
    dense_index_add(idx, "e1", _vec(1, 0))
    dense_index_add(idx, "e2", _vec(0, 1))
    return idx


def test_dense_topk_fixtures():
    idx = _two_rows()
    assert dense_topk(idx, _vec(1, 0), 1) == [("e1", 1.0)]
    [(a, sa), (b, sb)] = dense_topk(idx, _vec(0.6, 0.8), 2)
    assert (a, b) == ("e2", "e1")
    assert sa == pytest.approx(0.8) and sb == pytest.approx(0.6)


def test_dense_add_errors_and_count():
    idx = DenseIndex(64)
    assert len(idx) == 0
    idx.add("a", np.ones(64))
    assert len(idx) == 1
    with pytest.raises(DimMismatch):
        idx.add("b", np.ones(32))
    with pytest.raises(DuplicateId):
        idx.add("a", np.ones(64))
    with pytest.raises(DimMismatch):
        dense_topk(idx, _vec(1, 0), 1)
    with pytest.raises(EmptyIndex):
        dense_topk(DenseIndex(2), _vec(1, 0), 1)


def test_dense_ties_break_by_id():
    idx = DenseIndex(2)
    for sid in ("c", "a", "b"):
        idx.add(sid, [1.0, 0.0])
    assert [i for i, _ in dense_topk(idx, _vec(1, 0), 3)] == ["a", "b", "c"]


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.integers(1, 25), st.integers(1, 30), st.integers(0, 10**6))
def test_dense_topk_matches_brute_force(dim, n, k, seed):
    rng = np.random.default_rng(seed)
    idx = DenseIndex(dim)
    rows = rng.standard_normal((n, dim)).astype(np.float32)
    for i, r in enumerate(rows):
        idx.add(f"s{i:03d}", r)
    q = rng.standard_normal(dim)
    oracle = []
    for i, r in enumerate(rows.astype(np.float64)):
        nr = math.sqrt(sum(x * x for x in r))
        nq = math.sqrt(sum(x * x for x in q))
        oracle.append((f"s{i:03d}", sum(a * b for a, b in zip(r, q)) / (nr * nq) if nr and nq else 0.0))
    got = dense_topk(idx, EmbeddingVector(q), k)
    assert len(got) == min(k, n)
    got_scores = [s for _, s in got]
    assert got_scores == sorted(got_scores, reverse=True)
    expected = sorted(oracle, key=lambda p: -p[1])[:k]
    np.testing.assert_allclose(got_scores, [s for _, s in expected], atol=1e-9)


# ---------------------------------------------------------------- persistence

def test_dense_round_trip(tmp_path):
    docs = _docs("x = 1;", "y = 2;", "z = 3;")
    idx = DenseIndex(3)
    for d, row in zip(docs, np.eye(3) * 0.5):
        idx.add(d.snippet_id, row, d)
    persist_index(idx, tmp_path / "i.pdix")
    back = restore_index(tmp_path / "i.pdix")
    assert back == idx
    assert back.metadata[docs[0].snippet_id] == docs[0]


def test_sparse_round_trip(tmp_path):
    docs = _docs("int a = b;", "return a + c;", "c = c * 2;")
    idx = bm25_build_index(docs)
    persist_index(idx, tmp_path / "b.json")
    back = restore_index(tmp_path / "b.json")
    assert back == idx
    assert bm25_query(back, "a c", 3) == bm25_query(idx, "a c", 3)
    assert back.metadata == {d.snippet_id: d for d in docs}


def test_truncated_dense_file_is_corrupt(tmp_path):
    idx = _two_rows()
    path = tmp_path / "i.pdix"
    persist_index(idx, path)
    data = path.read_bytes()
    for cut in (len(data) - 1, len(data) // 2, 10):
        path.write_bytes(data[:cut])
        with pytest.raises(CorruptIndex):
            restore_index(path)


def test_flipped_byte_and_bad_magic_are_corrupt(tmp_path):
    idx = _two_rows()
    path = tmp_path / "i.pdix"
    persist_index(idx, path)
    data = bytearray(path.read_bytes())
    data[30] ^= 0xFF
    path.write_bytes(bytes(data))
    with pytest.raises(CorruptIndex):
        restore_index(path)
    path.write_bytes(b"NOPE" + bytes(data[4:]))
    with pytest.raises(CorruptIndex):
        restore_index(path)


def test_tampered_sparse_file_is_corrupt(tmp_path):
    path = tmp_path / "b.json"
    persist_index(bm25_build_index(_docs("a b", "b c")), path)
    path.write_text(path.read_text().replace('"n_docs": 2', '"n_docs": 3'))
    with pytest.raises(CorruptIndex):
        restore_index(path)
