"""Multi-perspective retrieval-augmented code completion with a LinUCB selector."""

from __future__ import annotations

__version__ = "0.1.0"

from .benchmark import Cell, Report, aggregate_report, run_benchmark, weighted_average
from .corpus import (
    CodeSnippet, CompletionTask, DatasetSplit, Language, SourceFile, TaskKind, chunk_file,
    extract_function_body_tasks, extract_random_line_tasks, ingest_repository, split_dataset,
)
from .embed import BackendConfig, BackendKind, LocalEmbedder, RemoteBackend, ScriptedGenerator, generate_text, remote_embed
from .generate import (
    Pipeline, PromptConfig, Strategy, assemble_augmented_prompt, assemble_fim_prompt, complete_task,
    truncate_generation,
)
from .index import DenseIndex, SparseIndex, bm25_build_index, bm25_query, dense_index_add, dense_topk
from .metrics import EvalRecord, edit_similarity, exact_match, levenshtein_distance
from .retrievers import Perspective, PerspectiveId, RetrievalResult, build_perspective_index, query_perspective
from .selection import (
    LinUcbState, LogisticModel, build_arm_features, linucb_init, linucb_score, linucb_select, linucb_update,
    logistic_select, logistic_train, max_similarity_select, train_linucb, union_context,
)
from .vectors import EmbeddingVector

__all__ = [
    "BackendConfig", "BackendKind", "Cell", "CodeSnippet", "CompletionTask", "DatasetSplit", "DenseIndex",
    "EmbeddingVector", "EvalRecord", "Language", "LinUcbState", "LocalEmbedder", "LogisticModel",
    "Perspective", "PerspectiveId", "Pipeline", "PromptConfig", "RemoteBackend", "Report",
    "RetrievalResult", "ScriptedGenerator", "SourceFile", "SparseIndex", "Strategy", "TaskKind",
    "aggregate_report", "assemble_augmented_prompt", "assemble_fim_prompt", "bm25_build_index",
    "bm25_query", "build_arm_features", "build_perspective_index", "chunk_file", "complete_task",
    "dense_index_add", "dense_topk", "edit_similarity", "exact_match", "extract_function_body_tasks",
    "extract_random_line_tasks", "generate_text", "ingest_repository", "levenshtein_distance",
    "linucb_init", "linucb_score", "linucb_select", "linucb_update", "logistic_select", "logistic_train",
    "max_similarity_select", "query_perspective", "remote_embed", "run_benchmark", "split_dataset",
    "train_linucb", "truncate_generation", "union_context", "weighted_average",
]
