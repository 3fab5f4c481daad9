from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multiretriever.embed import LocalEmbedder, ScriptedGenerator, prompt_hash
from multiretriever.errors import InvalidParam, UnsupportedPerspective
from multiretriever.index import DenseIndex, SparseIndex, jaccard_similarity, tokenize_code
from multiretriever.retrievers import (
    DEFAULT_TEMPLATE, EmbeddingCache, Perspective, PerspectiveId, RetrievalConfig, build_perspective_index,
    build_prompt, mask_middle_line, query_perspective, render_unfinished,
)

from .conftest import make_snippet, make_task

LEX = Perspective(PerspectiveId.LEXICAL)
HYPO = Perspective(PerspectiveId.HYPO_LINE)
SUM = Perspective(PerspectiveId.SUMMARY)
BM25 = Perspective(PerspectiveId.BM25)


class CountingEmbedder(LocalEmbedder):
    def __init__(self, dim: int = 64) -> None:
        super().__init__(dim)
        self.calls = 0
        self.texts: list[str] = []

    def embed(self, text):
        self.calls += 1
        self.texts.append(text)
        return super().embed(text)


class EchoGenerator:
    """Returns a fixed marker plus the prompt length, recording every call."""

    model_name = "echo"

    def __init__(self) -> None:
        self.prompts: list[str] = []

    def generate(self, prompt, max_tokens):
        self.prompts.append(prompt)
        return f"gen {len(prompt)}"


# ---------------------------------------------------------------- perspectives and prompts

def test_default_templates_and_order():
    assert DEFAULT_TEMPLATE == {PerspectiveId.LEXICAL: 1, PerspectiveId.HYPO_LINE: 3, PerspectiveId.SUMMARY: 5}
    assert [p.order for p in PerspectiveId] == [0, 1, 2, 3]
    assert LEX.template_no == 1 and HYPO.template_no == 3 and SUM.template_no == 5
    assert BM25.template_no is None and not BM25.is_prompted


@pytest.mark.parametrize("pid, bad", [(PerspectiveId.LEXICAL, 3), (PerspectiveId.SUMMARY, 1),
                                      (PerspectiveId.HYPO_LINE, 7)])
def test_template_must_belong_to_perspective(pid, bad):
    with pytest.raises(InvalidParam):
        Perspective(pid, bad)
    with pytest.raises(InvalidParam):
        Perspective(PerspectiveId.BM25, 1)


def test_build_prompt_fixtures():
    assert build_prompt(LEX, "x=1") == "Embedding the following code snippets: x=1"
    assert build_prompt(SUM, "x=1") == "This code snippets of x=1 means"
    assert build_prompt(HYPO, prefix="a", suffix="b") == "<PRE> a <SUF> b <MID>"
    assert build_prompt(Perspective(PerspectiveId.LEXICAL, 2), "y") == "Representing the following code snippets: y"
    assert build_prompt(Perspective(PerspectiveId.SUMMARY, 6), "y") == "Summarize the code snippets y"
    assert build_prompt(Perspective(PerspectiveId.HYPO_LINE, 4), "y") == "Complete the code snippets y"


def test_build_prompt_is_verbatim_with_bracket_text():
    # placeholders inside the substituted code must not be expanded again
    assert build_prompt(LEX, "a[code]b") == "Embedding the following code snippets: a[code]b"


def test_build_prompt_errors():
    with pytest.raises(UnsupportedPerspective):
        build_prompt(BM25, "x")
    with pytest.raises(InvalidParam):
        build_prompt(HYPO, "x")
    with pytest.raises(InvalidParam):
        build_prompt(LEX)


@settings(max_examples=100)
@given(st.text(max_size=40))
def test_lexical_prompt_contains_code(code):
    prompt = build_prompt(LEX, code)
    assert prompt.endswith(code)
    assert prompt.startswith("Embedding the following code snippets: ")


# ---------------------------------------------------------------- unfinished code

def test_render_unfinished_limits():
    task = make_task("l1\nl2\nl3", "", "s1")
    assert render_unfinished(task, 2, 1) == "l2\nl3\n<MID>\ns1"
    assert render_unfinished(task, 0, 0) == "<MID>"
    assert render_unfinished(make_task("l1\nl2\n", "x", ""), 5, 5) == "l1\nl2\n<MID>"


def test_render_unfinished_drops_hole_newline():
    # random-line tasks carry the hole's newline at the start of the suffix
    task = make_task("a();\n", "b();", "\nc();\n")
    assert render_unfinished(task) == "a();\n<MID>\nc();"


def test_mask_middle_line():
    assert mask_middle_line("a\nb\nc\n") == ("a", "b", "c")
    assert mask_middle_line("only\n") == ("", "only", "")
    assert mask_middle_line("a\nb\n") == ("a", "b", "")


# ---------------------------------------------------------------- build

SNIPPETS = [
    make_snippet("int total = 0;\nfor (Item item : items) {\n  total += item.price;\n}\n", "a.java"),
    make_snippet("socket.connect(host, port);\nstream.write(bytes);\n", "b.java"),
    make_snippet("logger.info(message);\n", "c.java"),
]


def test_build_lexical_shape():
    idx = build_perspective_index(SNIPPETS, LEX, LocalEmbedder(64))
    assert isinstance(idx, DenseIndex)
    assert len(idx) == 3 and idx.dim == 64
    assert set(idx.metadata) == {s.snippet_id for s in SNIPPETS}


def test_build_bm25_is_sparse():
    idx = build_perspective_index(SNIPPETS, BM25)
    assert isinstance(idx, SparseIndex) and idx.n_docs == 3


def test_hypoline_one_line_snippet_prompt():
    gen = EchoGenerator()
    build_perspective_index([SNIPPETS[2]], HYPO, LocalEmbedder(16), gen)
    assert gen.prompts == ["<PRE>  <SUF>  <MID>"]


def test_summary_embeds_generation_only():
    emb = CountingEmbedder(16)
    gen = ScriptedGenerator.from_prompts({"This code snippets of logger.info(message); means": "logs it"})
    build_perspective_index([SNIPPETS[2]], SUM, emb, gen)
    assert emb.texts == ["logs it"]


def test_generator_required_for_generated_perspectives():
    with pytest.raises(InvalidParam):
        build_perspective_index(SNIPPETS, HYPO, LocalEmbedder(16))


def test_cache_avoids_backend_calls_on_rebuild(tmp_path):
    cache = EmbeddingCache(tmp_path / "cache")
    emb, gen = CountingEmbedder(32), EchoGenerator()
    first = build_perspective_index(SNIPPETS, SUM, emb, gen, cache=cache)
    assert emb.calls == 3 and len(gen.prompts) == 3
    emb2, gen2 = CountingEmbedder(32), EchoGenerator()
    second = build_perspective_index(SNIPPETS, SUM, emb2, gen2, cache=cache)
    assert emb2.calls == 0 and gen2.prompts == []
    assert second == first


def test_cache_is_keyed_by_perspective_and_model(tmp_path):
    cache = EmbeddingCache(tmp_path)
    cache.put("s", "Lexical#1", "m", np.ones(4, dtype=np.float32))
    assert cache.get("s", "Lexical#1", "m") is not None
    assert cache.get("s", "Lexical#2", "m") is None
    assert cache.get("s", "Lexical#1", "other") is None
    assert EmbeddingCache.key("s", "t", "m") != EmbeddingCache.key("s", "t", "n")


def test_parallel_build_matches_serial():
    serial = build_perspective_index(SNIPPETS, LEX, LocalEmbedder(64))
    parallel = build_perspective_index(SNIPPETS, LEX, LocalEmbedder(64), jobs=3)
    assert serial == parallel


# ---------------------------------------------------------------- query

def test_lexical_query_ranks_overlapping_snippet_first():
    emb = LocalEmbedder(256)
    idx = build_perspective_index(SNIPPETS, LEX, emb)
    task = make_task("socket.connect(host, port);\n", "stream.write(bytes);", "\n")
    results = query_perspective(LEX, task, idx, emb, k=3)
    assert results[0].snippet_id == SNIPPETS[1].snippet_id

    # brute-force oracle over the same representation
    q = emb.embed(build_prompt(LEX, render_unfinished(task)))
    oracle = []
    for s in SNIPPETS:
        v = emb.embed(build_prompt(LEX, s.text.rstrip("\n")))
        oracle.append((float(np.dot(q.values, v.values)) / (q.norm * v.norm), s.snippet_id))
    oracle.sort(key=lambda p: (-p[0], p[1]))
    assert [r.snippet_id for r in results] == [sid for _, sid in oracle]
    np.testing.assert_allclose([r.cosine for r in results], [c for c, _ in oracle], atol=1e-6)


def test_query_features():
    emb = LocalEmbedder(64)
    idx = build_perspective_index(SNIPPETS, LEX, emb)
    task = make_task("logger.info(", "message);", "\n")
    [r] = query_perspective(LEX, task, idx, emb, k=1)
    assert r.jaccard == jaccard_similarity(tokenize_code(r.snippet_text), tokenize_code(task.prefix + task.suffix))
    assert -1.0 <= r.cosine <= 1.0
    assert not r.rescaled


def test_k_larger_than_corpus():
    emb = LocalEmbedder(64)
    idx = build_perspective_index(SNIPPETS, LEX, emb)
    assert len(query_perspective(LEX, make_task("a", "b", ""), idx, emb, k=10)) == 3
    bm = build_perspective_index(SNIPPETS, BM25)
    assert len(query_perspective(BM25, make_task("a", "b", ""), bm, k=10)) == 3


def test_bm25_scores_are_rescaled_into_unit_interval():
    bm = build_perspective_index(SNIPPETS, BM25)
    results = query_perspective(BM25, make_task("total item price", "x", ""), bm, k=3)
    assert results[0].snippet_id == SNIPPETS[0].snippet_id
    assert all(r.rescaled and 0.0 <= r.cosine <= 1.0 for r in results)
    assert results[0].raw_score > 0


def test_hypoline_query_uses_fim_prompt():
    emb, gen = LocalEmbedder(32), EchoGenerator()
    idx = build_perspective_index(SNIPPETS, HYPO, emb, gen)
    gen.prompts.clear()
    task = make_task("a();\nb();\n", "c();", "\nd();\n")
    query_perspective(HYPO, task, idx, emb, gen, cfg=RetrievalConfig(max_prefix_lines=1))
    assert gen.prompts == ["<PRE> b(); <SUF> d(); <MID>"]


def test_query_index_kind_mismatch():
    emb = LocalEmbedder(16)
    bm = build_perspective_index(SNIPPETS, BM25)
    with pytest.raises(InvalidParam):
        query_perspective(LEX, make_task("a", "b", ""), bm, emb)


def test_prompt_hash_scripting_round_trip():
    # scripted generators key on the exact prompt text
    prompt = build_prompt(SUM, "x")
    gen = ScriptedGenerator({prompt_hash(prompt): "y"})
    assert gen.generate(prompt, 4) == "y"
