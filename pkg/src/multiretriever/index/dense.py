"""Exact (brute-force) cosine index over embedding vectors."""

from __future__ import annotations

from typing import TYPE_CHECKING

import numpy as np

from .. import kernels
from ..errors import DimMismatch, DuplicateId, EmptyIndex, InvalidParam
from ..vectors import EmbeddingVector

if TYPE_CHECKING:
    from ..corpus import CodeSnippet


class DenseIndex:
    """Rows of float32 vectors keyed by snippet id.

    Build by repeated :func:`dense_index_add`, then query. Rows are stored as
    float32, which is also the on-disk precision, so persistence is lossless.
    """

    def __init__(self, dim: int) -> None:
        if dim < 1:
            raise InvalidParam("dim must be >= 1")
        self.dim = dim
        self.ids: list[str] = []
        self.metadata: dict[str, CodeSnippet] = {}
        self._rows: list[np.ndarray] = []
        self._id_set: set[str] = set()
        self._matrix: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def rows(self) -> np.ndarray:
        if self._matrix is None or self._matrix.shape[0] != len(self._rows):
            if self._rows:
                self._matrix = np.ascontiguousarray(np.stack(self._rows), dtype=np.float32)
            else:
                self._matrix = np.zeros((0, self.dim), dtype=np.float32)
        return self._matrix

    def add(self, snippet_id: str, values, snippet: CodeSnippet | None = None) -> None:
        row = np.asarray(values.values if isinstance(values, EmbeddingVector) else values,
                         dtype=np.float32).reshape(-1)
        if row.shape[0] != self.dim:
            raise DimMismatch(f"vector dim {row.shape[0]} != index dim {self.dim}")
        if snippet_id in self._id_set:
            raise DuplicateId(snippet_id)
        self.ids.append(snippet_id)
        self._id_set.add(snippet_id)
        self._rows.append(row)
        if snippet is not None:
            self.metadata[snippet_id] = snippet

    def __contains__(self, snippet_id: object) -> bool:
        return snippet_id in self._id_set

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DenseIndex):
            return NotImplemented
        return (self.dim == other.dim and self.ids == other.ids
                and np.array_equal(self.rows, other.rows)
                and self.metadata == other.metadata)

    def __repr__(self) -> str:
        return f"DenseIndex(dim={self.dim}, count={len(self)})"


def dense_index_add(index: DenseIndex, snippet_id: str, v: EmbeddingVector,
                    snippet: CodeSnippet | None = None) -> None:
    index.add(snippet_id, v, snippet)


def dense_topk(index: DenseIndex, query: EmbeddingVector, k: int) -> list[tuple[str, float]]:
    """Exact top-k by cosine; zero vectors score 0; ties by ascending snippet id."""
    if query.dim != index.dim:
        raise DimMismatch(f"query dim {query.dim} != index dim {index.dim}")
    if k < 1:
        raise InvalidParam("k must be >= 1")
    if not len(index):
        raise EmptyIndex("dense index has no rows")
    scores = kernels.cosine_scores(index.rows, query.values)
    ids = index.ids
    # full sort keeps the id tie-break exact; corpora here are thousands of rows
    order = sorted(range(len(ids)), key=lambda i: (-scores[i], ids[i]))
    return [(ids[i], float(scores[i])) for i in order[:k]]
