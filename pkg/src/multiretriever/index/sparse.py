"""Okapi BM25 over code tokens."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence

from ..errors import EmptyCorpus, InvalidParam
from .text import tokenize_code

if TYPE_CHECKING:
    from ..corpus import CodeSnippet


@dataclass
class SparseIndex:
    doc_term_freqs: dict[str, dict[str, int]]
    doc_lengths: dict[str, int]
    avg_doc_length: float
    doc_freq: dict[str, int]
    n_docs: int
    k1: float = 1.2
    b: float = 0.75
    metadata: dict[str, CodeSnippet] = field(default_factory=dict, compare=False, repr=False)
    _postings: dict[str, list[tuple[str, int]]] | None = field(
        default=None, init=False, compare=False, repr=False)

    def __len__(self) -> int:
        return self.n_docs

    def idf(self, term: str) -> float:
        df = self.doc_freq.get(term, 0)
        return math.log(1.0 + (self.n_docs - df + 0.5) / (df + 0.5))

    def postings(self) -> dict[str, list[tuple[str, int]]]:
        if self._postings is None:
            post: dict[str, list[tuple[str, int]]] = {}
            for sid, tfs in self.doc_term_freqs.items():
                for term, tf in tfs.items():
                    post.setdefault(term, []).append((sid, tf))
            self._postings = post
        return self._postings

    def score_all(self, query_tokens: Sequence[str]) -> dict[str, float]:
        """BM25 score of every document; query tokens are summed with repetition."""
        scores = dict.fromkeys(self.doc_lengths, 0.0)
        post = self.postings()
        avgdl = self.avg_doc_length
        for term in query_tokens:
            plist = post.get(term)
            if not plist:
                continue
            idf = self.idf(term)
            for sid, tf in plist:
                norm = self.k1 * (1.0 - self.b + self.b * self.doc_lengths[sid] / avgdl)
                scores[sid] += idf * tf * (self.k1 + 1.0) / (tf + norm)
        return scores


def bm25_build_index(snippets: Sequence[CodeSnippet], k1: float = 1.2, b: float = 0.75) -> SparseIndex:
    if not snippets:
        raise EmptyCorpus("cannot build a BM25 index over zero snippets")
    if k1 < 0 or not 0.0 <= b <= 1.0:
        raise InvalidParam(f"need k1 >= 0 and 0 <= b <= 1 (got k1={k1}, b={b})")
    tfs: dict[str, dict[str, int]] = {}
    lengths: dict[str, int] = {}
    df: Counter[str] = Counter()
    for s in snippets:
        tokens = tokenize_code(s.text)
        counts = Counter(tokens)
        tfs[s.snippet_id] = dict(counts)
        lengths[s.snippet_id] = len(tokens)
        df.update(counts.keys())
    return SparseIndex(
        doc_term_freqs=tfs,
        doc_lengths=lengths,
        avg_doc_length=sum(lengths.values()) / len(lengths),
        doc_freq=dict(df),
        n_docs=len(lengths),
        k1=k1,
        b=b,
        metadata={s.snippet_id: s for s in snippets},
    )


def bm25_query(index: SparseIndex, query_text: str, k: int) -> list[tuple[str, float]]:
    """Top ``min(k, n_docs)`` documents by score, ties by ascending snippet id."""
    if k < 1:
        raise InvalidParam("k must be >= 1")
    scores = index.score_all(tokenize_code(query_text))
    ranked = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    return ranked[:k]
