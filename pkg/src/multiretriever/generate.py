"""Prompt assembly, greedy generation and the end-to-end completion step."""

from __future__ import annotations

import enum
import hashlib
import threading
import time
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .corpus import CodeSnippet, CompletionTask, Language, TaskKind, split_lines
from .embed import Embedder, Generator
from .errors import InvalidParam, MultiRetrieverError
from .index import DenseIndex, SparseIndex
from .metrics import EvalRecord
from .retrievers import (
    DEFAULT_PERSPECTIVES, Perspective, PerspectiveId, RetrievalConfig, RetrievalResult,
    query_perspective,
)
from .selection import (
    LinUcbState, LogisticModel, build_arm_features, linucb_select, logistic_select,
    max_similarity_select, union_context,
)


@dataclass(frozen=True)
class PromptConfig:
    pre_token: str = "<PRE>"
    suf_token: str = "<SUF>"
    mid_token: str = "<MID>"
    end_tokens: tuple[str, ...] = ("<EOT>",)
    comment_prefix: str = "//"
    max_prefix_lines: int = 32
    max_suffix_lines: int = 16
    max_gen_tokens: int = 128
    context_line_budget: int = 40
    comment_context: bool = True
    # the literal template joins segments with single spaces
    separator: str = " "

    def __post_init__(self) -> None:
        object.__setattr__(self, "end_tokens", tuple(self.end_tokens))
        tokens = [self.pre_token, self.suf_token, self.mid_token]
        if not all(tokens) or len(set(tokens)) != 3:
            raise InvalidParam("pre/suf/mid tokens must be non-empty and distinct")
        if any(not t for t in self.end_tokens):
            raise InvalidParam("end tokens must be non-empty")
        if min(self.max_prefix_lines, self.max_suffix_lines, self.context_line_budget) < 0:
            raise InvalidParam("line limits must be >= 0")
        if self.max_gen_tokens < 1:
            raise InvalidParam("max_gen_tokens must be >= 1")


def _last_lines(text: str, n: int) -> str:
    return "".join(split_lines(text)[-n:]) if n else ""


def _first_lines(text: str, n: int) -> str:
    return "".join(split_lines(text)[:n])


def _fim(cfg: PromptConfig, pre_segment: str, suffix: str) -> str:
    sep = cfg.separator
    return sep.join([cfg.pre_token, pre_segment, cfg.suf_token,
                     _first_lines(suffix, cfg.max_suffix_lines), cfg.mid_token])


def assemble_fim_prompt(cfg: PromptConfig, prefix: str, suffix: str) -> str:
    """``<PRE> prefix <SUF> suffix <MID>`` with line-truncated prefix and suffix."""
    return _fim(cfg, _last_lines(prefix, cfg.max_prefix_lines), suffix)


def _snippet_text(item) -> str:
    if isinstance(item, str):
        return item
    if isinstance(item, (CodeSnippet,)):
        return item.text
    return item.snippet_text


def context_block(cfg: PromptConfig, retrieved: Sequence) -> str:
    """Retrieved snippets as (comment-wrapped) lines, capped at the line budget."""
    out: list[str] = []
    budget = cfg.context_line_budget
    for item in retrieved:
        text = _snippet_text(item)
        if text.endswith("\n"):
            text = text[:-1]
        for line in text.split("\n"):
            if len(out) >= budget:
                break
            if cfg.comment_context:
                line = f"{cfg.comment_prefix} {line}" if line else cfg.comment_prefix
            out.append(line)
    return "".join(line + "\n" for line in out)


def assemble_augmented_prompt(cfg: PromptConfig, retrieved: Sequence, prefix: str, suffix: str) -> str:
    """FIM prompt with retrieved context placed before the prefix in the PRE segment.

    With nothing retrieved the result equals :func:`assemble_fim_prompt`.
    """
    return _fim(cfg, context_block(cfg, retrieved) + _last_lines(prefix, cfg.max_prefix_lines), suffix)


def _indent_width(line: str) -> int:
    expanded = line.expandtabs(8)
    return len(expanded) - len(expanded.lstrip())


def _cut_brace_body(text: str) -> str:
    """Text before the brace that closes the enclosing body, if any."""
    depth = 0
    quote = None
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if quote:
            if ch == "\\":
                i += 1
            elif ch == quote or ch == "\n":
                quote = None
        elif ch in "\"'":
            quote = ch
        elif text.startswith("//", i):
            nl = text.find("\n", i)
            if nl < 0:
                break
            i = nl
            continue
        elif ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth < 0:
                return text[:i]
        i += 1
    return text


def _cut_indent_body(text: str) -> str:
    lines = text.split("\n")
    base = None
    for i, line in enumerate(lines):
        if not line.strip():
            continue
        width = _indent_width(line)
        if base is None:
            base = width
        elif width < base:
            return "\n".join(lines[:i])
    return text


def truncate_generation(kind: TaskKind, raw: str, cfg: PromptConfig,
                        language: Language = Language.BRACE) -> str:
    """Cut a raw generation down to the completion for ``kind``."""
    text = raw
    cuts = [i for i in (text.find(tok) for tok in cfg.end_tokens) if i >= 0]
    if cuts:
        text = text[:min(cuts)]
    if TaskKind(kind) is TaskKind.RANDOM_LINE:
        text = text.split("\n", 1)[0]
    elif language is Language.INDENT:
        text = _cut_indent_body(text)
    else:
        text = _cut_brace_body(text)
    return text.rstrip()


# --------------------------------------------------------------------------- strategies

class StrategyKind(str, enum.Enum):
    BASE = "base"
    SINGLE = "single"
    UNION = "union"
    MAXSIM = "maxsim"
    LOGISTIC = "logistic"
    LINUCB = "linucb"


@dataclass(frozen=True)
class Strategy:
    kind: StrategyKind
    perspective: PerspectiveId | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", StrategyKind(self.kind))
        if (self.kind is StrategyKind.SINGLE) != (self.perspective is not None):
            raise InvalidParam("exactly the single strategy takes a perspective")
        if self.perspective is not None:
            object.__setattr__(self, "perspective", PerspectiveId(self.perspective))

    @property
    def name(self) -> str:
        if self.kind is StrategyKind.SINGLE:
            return self.perspective.value.lower()
        return self.kind.value

    @classmethod
    def parse(cls, name: str) -> Strategy:
        key = name.strip().lower()
        for pid in PerspectiveId:
            if key in (pid.value.lower(), f"single:{pid.value.lower()}"):
                return cls(StrategyKind.SINGLE, pid)
        try:
            return cls(StrategyKind(key))
        except ValueError:
            valid = [p.value.lower() for p in PerspectiveId] + [k.value for k in StrategyKind if k is not StrategyKind.SINGLE]
            raise InvalidParam(f"unknown strategy {name!r}; choose from {valid}") from None

    def __str__(self) -> str:
        return self.name


def single(pid: PerspectiveId) -> Strategy:
    return Strategy(StrategyKind.SINGLE, pid)


UNION = Strategy(StrategyKind.UNION)
MAXSIM = Strategy(StrategyKind.MAXSIM)
LOGISTIC = Strategy(StrategyKind.LOGISTIC)
LINUCB = Strategy(StrategyKind.LINUCB)
BASE = Strategy(StrategyKind.BASE)


# --------------------------------------------------------------------------- pipeline

@dataclass
class Pipeline:
    """Everything needed to complete a task: indexes, backends and selectors.

    ``arms`` are the perspectives the selectors choose between, in
    perspective declaration order. Retrievals are memoized per task id, so
    evaluating several strategies on one task queries each index once.
    """

    perspectives: Sequence[Perspective]
    indexes: Mapping[PerspectiveId, DenseIndex | SparseIndex]
    embedder: Embedder | None
    generator: Generator
    prompt: PromptConfig = field(default_factory=PromptConfig)
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    linucb: LinUcbState | None = None
    logistic: LogisticModel | None = None
    record_timing: bool = False
    _memo: dict = field(default_factory=dict, init=False, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, init=False, repr=False)

    def __post_init__(self) -> None:
        self.perspectives = sorted(self.perspectives, key=lambda p: p.id.order)
        ids = [p.id for p in self.perspectives]
        if len(set(ids)) != len(ids):
            raise InvalidParam("each perspective may appear once")
        missing = [pid.value for pid in ids if pid not in self.indexes]
        if missing:
            raise InvalidParam(f"no index for perspectives {missing}")

    @property
    def arms(self) -> list[Perspective]:
        return list(self.perspectives)

    def arm_index(self, pid: PerspectiveId) -> int:
        for i, p in enumerate(self.perspectives):
            if p.id is pid:
                return i
        raise InvalidParam(f"perspective {pid.value} is not active")

    def results_per_arm(self, task: CompletionTask) -> list[list[RetrievalResult]]:
        with self._lock:
            hit = self._memo.get(task.task_id)
        if hit is not None:
            return hit
        results = [
            query_perspective(p, task, self.indexes[p.id], self.embedder, self.generator,
                              self.retrieval.k, self.retrieval)
            for p in self.perspectives
        ]
        with self._lock:
            self._memo[task.task_id] = results
        return results

    def arm_features(self, task: CompletionTask) -> np.ndarray:
        return build_arm_features(self.results_per_arm(task))

    def choose(self, task: CompletionTask, strategy: Strategy) -> tuple[int | None, list[RetrievalResult]]:
        """(selected arm, context snippets) for ``strategy``."""
        kind = strategy.kind
        if kind is StrategyKind.BASE:
            return None, []
        per_arm = self.results_per_arm(task)
        if kind is StrategyKind.SINGLE:
            arm = self.arm_index(strategy.perspective)
        elif kind is StrategyKind.UNION:
            return None, union_context(per_arm)
        elif kind is StrategyKind.MAXSIM:
            arm = max_similarity_select(per_arm)
        elif kind is StrategyKind.LINUCB:
            if self.linucb is None:
                raise InvalidParam("LinUCB strategy needs a trained selector")
            arm = linucb_select(self.linucb, build_arm_features(per_arm))
        elif kind is StrategyKind.LOGISTIC:
            if self.logistic is None:
                raise InvalidParam("logistic strategy needs a trained model")
            arm = logistic_select(self.logistic, build_arm_features(per_arm))
        else:  # pragma: no cover
            raise InvalidParam(f"unhandled strategy {strategy}")
        return arm, list(per_arm[arm])

    def prompt_for(self, task: CompletionTask, context: Sequence) -> str:
        return assemble_augmented_prompt(self.prompt, context, task.prefix, task.suffix)

    def generate_for(self, task: CompletionTask, context: Sequence) -> tuple[str, str]:
        """(prompt, truncated generation)."""
        prompt = self.prompt_for(task, context)
        raw = self.generator.generate(prompt, self.prompt.max_gen_tokens)
        return prompt, truncate_generation(task.kind, raw, self.prompt, task.language)

    def arm_reward(self, task: CompletionTask, arm: int) -> int:
        """Exact Match of the completion made with ``arm``'s retrieval."""
        _, generation = self.generate_for(task, self.results_per_arm(task)[arm])
        return int(generation.strip() == task.ground_truth.strip())

    def complete_task(self, task: CompletionTask, strategy: Strategy) -> EvalRecord:
        start = time.perf_counter()
        arm: int | None = None
        context: list[RetrievalResult] = []
        prompt_digest = None
        try:
            arm, context = self.choose(task, strategy)
            prompt, generation = self.generate_for(task, context)
            prompt_digest = hashlib.sha256(prompt.encode("utf-8")).hexdigest()
            error = None
        except MultiRetrieverError as exc:
            generation, error = "", f"{type(exc).__name__}: {exc}"
        elapsed = (time.perf_counter() - start) * 1000.0 if self.record_timing else None
        return EvalRecord.score(
            generation=generation, ground_truth=task.ground_truth,
            task_id=task.task_id, kind=task.kind.value, strategy=strategy.name, arm=arm,
            error=error, retrieval_ids=[r.snippet_id for r in context],
            prompt_hash=prompt_digest, elapsed_ms=elapsed,
        )


def complete_task(task: CompletionTask, perspectives: Sequence[Perspective],
                  indexes: Mapping[PerspectiveId, DenseIndex | SparseIndex],
                  embedder: Embedder | None, generator: Generator, selector: Strategy,
                  cfg: PromptConfig | None = None, *, retrieval: RetrievalConfig | None = None,
                  linucb: LinUcbState | None = None, logistic: LogisticModel | None = None) -> EvalRecord:
    """Retrieve, select, prompt, generate, truncate and score one task."""
    pipeline = Pipeline(perspectives or DEFAULT_PERSPECTIVES, indexes, embedder, generator,
                        cfg or PromptConfig(), retrieval or RetrievalConfig(), linucb, logistic)
    return pipeline.complete_task(task, selector)
