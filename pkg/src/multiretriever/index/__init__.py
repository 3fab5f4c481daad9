"""Similarity primitives and retrieval stores."""

from .dense import DenseIndex, dense_index_add, dense_topk
from .sparse import SparseIndex, bm25_build_index, bm25_query
from .store import IoError, persist_index, restore_index
from .text import jaccard_similarity, tokenize_code

__all__ = [
    "DenseIndex", "IoError", "SparseIndex", "bm25_build_index", "bm25_query",
    "dense_index_add", "dense_topk", "jaccard_similarity", "persist_index",
    "restore_index", "tokenize_code",
]
