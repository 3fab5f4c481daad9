"""Prompt-based multi-perspective retrieval.

Each perspective turns code into a vector differently: the lexical view
embeds the wrapped code, the hypothetical-line view embeds what the model
would write into a masked line, and the summary view embeds the model's
description of the code. A BM25 index rides along as a fourth, non-prompt
perspective. Both the corpus side and the query side go through the same
prompt construction so their vectors are comparable.
"""

from __future__ import annotations

import enum
import hashlib
import logging
import os
import re
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import CodeSnippet, CompletionTask, split_lines
from .embed import Embedder, Generator
from .errors import CorruptIndex, EmptyCorpus, InvalidParam, UnsupportedPerspective
from .index import (
    DenseIndex, SparseIndex, bm25_build_index, bm25_query, dense_topk,
    jaccard_similarity, tokenize_code,
)
from .index.store import decode_vector_record, encode_vector_record
from .vectors import EmbeddingVector

logger = logging.getLogger(__name__)


class PerspectiveId(str, enum.Enum):
    """Retrieval perspectives; declaration order is the bandit arm order."""

    LEXICAL = "Lexical"
    HYPO_LINE = "HypoLine"
    SUMMARY = "Summary"
    BM25 = "Bm25"

    @property
    def order(self) -> int:
        return list(PerspectiveId).index(self)


# Prompt rows 1-6. Rows 3-6 are followed by a model generation in the table
# they come from; only the prompt part appears here. Row 3 uses the
# fill-in-the-middle layout rather than the shorthand "[code]->[generation]".
TEMPLATES: dict[int, str] = {
    1: "Embedding the following code snippets: [code]",
    2: "Representing the following code snippets: [code]",
    3: "<PRE> [Prefix] <SUF> [Suffix] <MID>",
    4: "Complete the code snippets [code]",
    5: "This code snippets of [code] means",
    6: "Summarize the code snippets [code]",
}
TEMPLATE_ROWS: dict[PerspectiveId, tuple[int, ...]] = {
    PerspectiveId.LEXICAL: (1, 2),
    PerspectiveId.HYPO_LINE: (3, 4),
    PerspectiveId.SUMMARY: (5, 6),
}
DEFAULT_TEMPLATE = {PerspectiveId.LEXICAL: 1, PerspectiveId.HYPO_LINE: 3, PerspectiveId.SUMMARY: 5}
MID_MARKER = "<MID>"


@dataclass(frozen=True)
class Perspective:
    id: PerspectiveId
    template_no: int | None = None

    def __post_init__(self) -> None:
        pid = PerspectiveId(self.id)
        object.__setattr__(self, "id", pid)
        if pid is PerspectiveId.BM25:
            if self.template_no is not None:
                raise InvalidParam("the BM25 perspective takes no prompt template")
            return
        if self.template_no is None:
            object.__setattr__(self, "template_no", DEFAULT_TEMPLATE[pid])
        elif self.template_no not in TEMPLATE_ROWS[pid]:
            raise InvalidParam(
                f"template {self.template_no} does not belong to {pid.value} "
                f"(allowed: {TEMPLATE_ROWS[pid]})")

    @property
    def tag(self) -> str:
        return self.id.value if self.template_no is None else f"{self.id.value}#{self.template_no}"

    @property
    def is_prompted(self) -> bool:
        return self.id is not PerspectiveId.BM25

    @property
    def uses_generator(self) -> bool:
        return self.id in (PerspectiveId.HYPO_LINE, PerspectiveId.SUMMARY)


DEFAULT_PERSPECTIVES = (
    Perspective(PerspectiveId.LEXICAL),
    Perspective(PerspectiveId.HYPO_LINE),
    Perspective(PerspectiveId.SUMMARY),
)


@dataclass(frozen=True)
class RetrievalConfig:
    k: int = 1
    max_prefix_lines: int = 32
    max_suffix_lines: int = 16
    hypo_max_tokens: int = 48
    summary_max_tokens: int = 64

    def __post_init__(self) -> None:
        if self.k < 1:
            raise InvalidParam("k must be >= 1")
        if self.max_prefix_lines < 0 or self.max_suffix_lines < 0:
            raise InvalidParam("line limits must be >= 0")
        if self.hypo_max_tokens < 1 or self.summary_max_tokens < 1:
            raise InvalidParam("generation budgets must be >= 1")


@dataclass(frozen=True)
class RetrievalResult:
    perspective: Perspective
    snippet_id: str
    snippet_text: str
    cosine: float
    jaccard: float
    # BM25 results carry a rescaled score in the cosine slot
    rescaled: bool = False
    raw_score: float | None = None


# --------------------------------------------------------------------------- prompts

_PLACEHOLDER = re.compile(r"\[(code|Prefix|Suffix)\]")


def _fill(template: str, **values: str) -> str:
    return _PLACEHOLDER.sub(lambda m: values[m.group(1)], template)


def build_prompt(p: Perspective, code: str | None = None, *,
                 prefix: str | None = None, suffix: str | None = None) -> str:
    """Instantiate the perspective's template with text substituted verbatim.

    The fill-in-the-middle row needs ``prefix``/``suffix``; every other row
    takes ``code``.
    """
    if not p.is_prompted:
        raise UnsupportedPerspective("BM25 has no prompt template")
    template = TEMPLATES[p.template_no]
    if "[Prefix]" in template:
        if prefix is None or suffix is None:
            raise InvalidParam(f"template {p.template_no} needs prefix and suffix")
        return _fill(template, Prefix=prefix, Suffix=suffix)
    if code is None:
        raise InvalidParam(f"template {p.template_no} needs code")
    return _fill(template, code=code)


def _strip_nl(lines: Sequence[str]) -> list[str]:
    return [line[:-1] if line.endswith("\n") else line for line in lines]


def context_lines(task: CompletionTask, max_prefix_lines: int,
                  max_suffix_lines: int) -> tuple[list[str], list[str]]:
    """Last prefix lines and first suffix lines around the hole, without newlines."""
    if max_prefix_lines < 0 or max_suffix_lines < 0:
        raise InvalidParam("line limits must be >= 0")
    suffix = task.suffix[1:] if task.suffix.startswith("\n") else task.suffix
    pre = _strip_nl(split_lines(task.prefix))
    suf = _strip_nl(split_lines(suffix))
    return (pre[-max_prefix_lines:] if max_prefix_lines else []), suf[:max_suffix_lines]


def render_unfinished(task: CompletionTask, max_prefix_lines: int = 32,
                      max_suffix_lines: int = 16) -> str:
    """Unfinished code as text: prefix tail, a ``<MID>`` line, suffix head."""
    pre, suf = context_lines(task, max_prefix_lines, max_suffix_lines)
    return "\n".join([*pre, MID_MARKER, *suf])


def _as_code(text: str) -> str:
    return text[:-1] if text.endswith("\n") else text


def mask_middle_line(snippet_text: str) -> tuple[str, str, str]:
    """(prefix, masked line, suffix) with the line at index n // 2 masked."""
    lines = _strip_nl(split_lines(snippet_text)) or [""]
    m = len(lines) // 2
    return "\n".join(lines[:m]), lines[m], "\n".join(lines[m + 1:])


def _hypo_prompt(p: Perspective, prefix: str, suffix: str) -> str:
    if p.template_no == 3:
        return build_prompt(p, prefix=prefix, suffix=suffix)
    return build_prompt(p, "\n".join([prefix, MID_MARKER, suffix]))


def snippet_representation(snippet: CodeSnippet, p: Perspective, embedder: Embedder,
                           generator: Generator | None, cfg: RetrievalConfig) -> EmbeddingVector:
    """Corpus-side vector for one snippet under perspective ``p``."""
    code = _as_code(snippet.text)
    if p.id is PerspectiveId.LEXICAL:
        return embedder.embed(build_prompt(p, code))
    if generator is None:
        raise InvalidParam(f"{p.id.value} needs a generator")
    if p.id is PerspectiveId.HYPO_LINE:
        prefix, _, suffix = mask_middle_line(snippet.text)
        return embedder.embed(generator.generate(_hypo_prompt(p, prefix, suffix), cfg.hypo_max_tokens))
    if p.id is PerspectiveId.SUMMARY:
        return embedder.embed(generator.generate(build_prompt(p, code), cfg.summary_max_tokens))
    raise UnsupportedPerspective(p.id.value)


def query_representation(task: CompletionTask, p: Perspective, embedder: Embedder,
                         generator: Generator | None, cfg: RetrievalConfig) -> EmbeddingVector:
    """Query-side vector for the unfinished code of ``task``."""
    if p.id is PerspectiveId.LEXICAL:
        rendered = render_unfinished(task, cfg.max_prefix_lines, cfg.max_suffix_lines)
        return embedder.embed(build_prompt(p, rendered))
    if generator is None:
        raise InvalidParam(f"{p.id.value} needs a generator")
    if p.id is PerspectiveId.HYPO_LINE:
        pre, suf = context_lines(task, cfg.max_prefix_lines, cfg.max_suffix_lines)
        prompt = _hypo_prompt(p, "\n".join(pre), "\n".join(suf))
        return embedder.embed(generator.generate(prompt, cfg.hypo_max_tokens))
    if p.id is PerspectiveId.SUMMARY:
        rendered = render_unfinished(task, cfg.max_prefix_lines, cfg.max_suffix_lines)
        return embedder.embed(generator.generate(build_prompt(p, rendered), cfg.summary_max_tokens))
    raise UnsupportedPerspective(p.id.value)


# --------------------------------------------------------------------------- cache

class EmbeddingCache:
    """Content-addressed vector files, one per (snippet, perspective, model)."""

    def __init__(self, root: str | Path) -> None:
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    @staticmethod
    def key(snippet_id: str, perspective_tag: str, model_name: str) -> str:
        return hashlib.sha256(f"{snippet_id}{perspective_tag}{model_name}".encode()).hexdigest()

    def _path(self, key: str) -> Path:
        return self.root / key[:2] / f"{key}.vec"

    def get(self, snippet_id: str, perspective_tag: str, model_name: str) -> np.ndarray | None:
        path = self._path(self.key(snippet_id, perspective_tag, model_name))
        try:
            buf = path.read_bytes()
        except FileNotFoundError:
            return None
        if len(buf) < 2:
            return None
        n = int.from_bytes(buf[:2], "little")
        dim, rem = divmod(len(buf) - 2 - n, 4)
        if rem or dim < 1:
            return None
        try:
            sid, values, _ = decode_vector_record(buf, 0, dim)
        except CorruptIndex:
            return None
        return values if sid == snippet_id else None

    def put(self, snippet_id: str, perspective_tag: str, model_name: str, values: np.ndarray) -> None:
        path = self._path(self.key(snippet_id, perspective_tag, model_name))
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        with os.fdopen(fd, "wb") as fh:
            fh.write(encode_vector_record(snippet_id, values))
        os.replace(tmp, path)


def _cache_model_name(p: Perspective, embedder: Embedder, generator: Generator | None) -> str:
    if p.uses_generator and generator is not None:
        return f"{embedder.model_name}|{generator.model_name}"
    return embedder.model_name


# --------------------------------------------------------------------------- build / query

def build_perspective_index(snippets: Sequence[CodeSnippet], p: Perspective,
                            embedder: Embedder | None = None, generator: Generator | None = None,
                            *, cfg: RetrievalConfig | None = None, cache: EmbeddingCache | None = None,
                            jobs: int = 1) -> DenseIndex | SparseIndex:
    """One index entry per snippet for perspective ``p``.

    With a ``cache``, vectors already computed for the same snippet,
    perspective and model are reused without touching the backends.
    """
    if not snippets:
        raise EmptyCorpus("no snippets to index")
    if p.id is PerspectiveId.BM25:
        return bm25_build_index(snippets)
    if embedder is None:
        raise InvalidParam("dense perspectives need an embedder")
    if p.uses_generator and generator is None:
        raise InvalidParam(f"{p.id.value} needs a generator")
    cfg = cfg or RetrievalConfig()
    model = _cache_model_name(p, embedder, generator)

    def represent(snippet: CodeSnippet) -> np.ndarray:
        if cache is not None:
            hit = cache.get(snippet.snippet_id, p.tag, model)
            if hit is not None and hit.shape[0] == embedder.dim:
                return hit
        vec = snippet_representation(snippet, p, embedder, generator, cfg)
        values = vec.values.astype(np.float32)
        if cache is not None:
            cache.put(snippet.snippet_id, p.tag, model, values)
        return values

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(represent, snippets))
    else:
        rows = [represent(s) for s in snippets]
    index = DenseIndex(embedder.dim)
    for snippet, row in zip(snippets, rows):
        index.add(snippet.snippet_id, row, snippet)
    return index


def _rescale_bm25(scores: list[float]) -> list[float]:
    if len(scores) == 1 or max(scores) == min(scores):
        return [s / (1.0 + s) for s in scores]
    lo, hi = min(scores), max(scores)
    return [(s - lo) / (hi - lo) for s in scores]


def _snippet_text(index: DenseIndex | SparseIndex, snippet_id: str) -> str:
    try:
        return index.metadata[snippet_id].text
    except KeyError:
        raise InvalidParam(f"index has no snippet metadata for {snippet_id}") from None


def query_perspective(p: Perspective, task: CompletionTask, index: DenseIndex | SparseIndex,
                      embedder: Embedder | None = None, generator: Generator | None = None,
                      k: int = 1, cfg: RetrievalConfig | None = None) -> list[RetrievalResult]:
    """Top-``k`` snippets for ``task`` under ``p`` with cosine and Jaccard features."""
    cfg = cfg or RetrievalConfig()
    if k < 1:
        raise InvalidParam("k must be >= 1")
    if p.id is PerspectiveId.BM25:
        if not isinstance(index, SparseIndex):
            raise InvalidParam("BM25 perspective needs a SparseIndex")
        ranked = bm25_query(index, render_unfinished(task, cfg.max_prefix_lines, cfg.max_suffix_lines), k)
        slots = _rescale_bm25([s for _, s in ranked]) if ranked else []
        hits = [(sid, slot, raw) for (sid, raw), slot in zip(ranked, slots)]
        rescaled = True
    else:
        if not isinstance(index, DenseIndex):
            raise InvalidParam(f"{p.id.value} perspective needs a DenseIndex")
        if embedder is None:
            raise InvalidParam("dense perspectives need an embedder")
        q = query_representation(task, p, embedder, generator, cfg)
        hits = [(sid, cos, None) for sid, cos in dense_topk(index, q, k)]
        rescaled = False
    query_tokens = tokenize_code(task.prefix + task.suffix)
    results = []
    for sid, score, raw in hits:
        text = _snippet_text(index, sid)
        results.append(RetrievalResult(
            p, sid, text, float(score),
            jaccard_similarity(tokenize_code(text), query_tokens),
            rescaled, raw,
        ))
    return results
