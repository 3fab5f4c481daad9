"""Repository ingestion, snippet chunking, task extraction and file splits.

Every source file is held as a list of lines that keep their ``"\\n"``
terminators, so ``"".join(lines)`` is the original (newline-normalized) text.
All task extractors preserve the reconstruction invariant
``prefix + ground_truth + suffix == file text``.
"""

from __future__ import annotations

import enum
import fnmatch
import hashlib
import json
import logging
import math
import random
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from .errors import EmptyCorpus, InvalidFraction, PathNotFound, UnsupportedLanguage
from .index.text import tokenize_code

logger = logging.getLogger(__name__)


class Language(str, enum.Enum):
    BRACE = "BraceLang"
    INDENT = "IndentLang"
    OTHER = "Other"


class TaskKind(str, enum.Enum):
    RANDOM_LINE = "RandomLine"
    FUNCTION_BODY = "FunctionBody"

    @property
    def abbrev(self) -> str:
        return "RL" if self is TaskKind.RANDOM_LINE else "FB"


BRACE_EXTENSIONS = frozenset({
    ".c", ".h", ".cc", ".cpp", ".cxx", ".hpp", ".hh", ".cs", ".java", ".js", ".jsx",
    ".ts", ".tsx", ".go", ".rs", ".kt", ".kts", ".scala", ".swift", ".php", ".dart",
    ".m", ".groovy",
})
INDENT_EXTENSIONS = frozenset({".py", ".pyi"})


def language_for_path(path: str) -> Language:
    suffix = Path(path).suffix.lower()
    if suffix in BRACE_EXTENSIONS:
        return Language.BRACE
    if suffix in INDENT_EXTENSIONS:
        return Language.INDENT
    return Language.OTHER


_LINE = re.compile(r"[^\n]*\n|[^\n]+\Z")


def split_lines(text: str) -> list[str]:
    """Split on ``"\\n"`` only (not str.splitlines' wider set), keeping terminators."""
    return _LINE.findall(text)


@dataclass(frozen=True)
class SourceFile:
    repo_id: str
    rel_path: str
    language: Language
    lines: tuple[str, ...]

    @classmethod
    def from_text(cls, repo_id: str, rel_path: str, text: str,
                  language: Language | None = None) -> SourceFile:
        if not rel_path:
            raise ValueError("rel_path must be non-empty")
        text = text.replace("\r\n", "\n")
        return cls(repo_id, rel_path, language or language_for_path(rel_path),
                   tuple(split_lines(text)))

    @property
    def text(self) -> str:
        return "".join(self.lines)

    @property
    def ref(self) -> tuple[str, str]:
        return (self.repo_id, self.rel_path)


def snippet_id_for(repo_id: str, rel_path: str, start_line: int, end_line: int) -> str:
    key = f"{repo_id}\x00{rel_path}\x00{start_line}\x00{end_line}".encode()
    return hashlib.sha256(key).hexdigest()[:16]


@dataclass(frozen=True)
class CodeSnippet:
    snippet_id: str
    repo_id: str
    rel_path: str
    start_line: int
    end_line: int
    text: str

    def to_dict(self) -> dict:
        return {
            "snippet_id": self.snippet_id,
            "repo_id": self.repo_id,
            "rel_path": self.rel_path,
            "start_line": self.start_line,
            "end_line": self.end_line,
            "text": self.text,
        }

    @classmethod
    def from_dict(cls, d: dict) -> CodeSnippet:
        return cls(d["snippet_id"], d["repo_id"], d["rel_path"],
                   int(d["start_line"]), int(d["end_line"]), d["text"])


@dataclass(frozen=True)
class CompletionTask:
    task_id: str
    kind: TaskKind
    prefix: str
    suffix: str
    ground_truth: str
    source_file: tuple[str, str]
    hole_start_line: int

    @property
    def language(self) -> Language:
        return language_for_path(self.source_file[1])

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "kind": self.kind.value,
            "prefix": self.prefix,
            "suffix": self.suffix,
            "ground_truth": self.ground_truth,
            "source_file": list(self.source_file),
            "hole_start_line": self.hole_start_line,
        }

    @classmethod
    def from_dict(cls, d: dict) -> CompletionTask:
        return cls(d["task_id"], TaskKind(d["kind"]), d["prefix"], d["suffix"],
                   d["ground_truth"], tuple(d["source_file"]), int(d["hole_start_line"]))


@dataclass(frozen=True)
class DatasetSplit:
    retrieval_files: tuple[SourceFile, ...]
    validation_files: tuple[SourceFile, ...]
    test_files: tuple[SourceFile, ...]
    seed: int

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "retrieval_files": [list(f.ref) for f in self.retrieval_files],
            "validation_files": [list(f.ref) for f in self.validation_files],
            "test_files": [list(f.ref) for f in self.test_files],
        }


# --------------------------------------------------------------------------- ingest

def ingest_repository(root_path: str | Path, include_globs: Sequence[str],
                      repo_id: str | None = None) -> list[SourceFile]:
    """Read every file under ``root_path`` matching one of ``include_globs``.

    A glob matches against the POSIX relative path or the bare file name, so
    ``"*.java"`` selects Java files at any depth. Hidden directories are
    skipped. Files are decoded as UTF-8 with replacement characters and
    returned sorted by relative path.
    """
    root = Path(root_path)
    if not root.is_dir():
        raise PathNotFound(f"repository root not found: {root}")
    if not include_globs:
        raise ValueError("include_globs must be non-empty")
    repo = repo_id or root.resolve().name
    files = []
    for path in root.rglob("*"):
        if not path.is_file():
            continue
        rel = path.relative_to(root).as_posix()
        if any(part.startswith(".") for part in rel.split("/")[:-1]):
            continue
        if not any(fnmatch.fnmatchcase(rel, g) or fnmatch.fnmatchcase(path.name, g)
                   for g in include_globs):
            continue
        text = path.read_bytes().decode("utf-8", errors="replace")
        files.append(SourceFile.from_text(repo, rel, text))
    if not files:
        raise EmptyCorpus(f"no files under {root} match {list(include_globs)}")
    files.sort(key=lambda f: f.rel_path)
    return files


# --------------------------------------------------------------------------- chunking

def chunk_file(file: SourceFile, window_lines: int = 20, stride_lines: int = 10) -> list[CodeSnippet]:
    """Sliding line windows starting at 1, 1+stride, ... until end of file is covered."""
    if window_lines < 1 or not 1 <= stride_lines <= window_lines:
        raise ValueError("need window_lines >= 1 and 1 <= stride_lines <= window_lines")
    n = len(file.lines)
    snippets = []
    start = 1
    while start <= n:
        end = min(start + window_lines - 1, n)
        snippets.append(CodeSnippet(
            snippet_id_for(file.repo_id, file.rel_path, start, end),
            file.repo_id, file.rel_path, start, end,
            "".join(file.lines[start - 1:end]),
        ))
        if end == n:
            break
        start += stride_lines
    return snippets


# --------------------------------------------------------------------------- random lines

_COMMENT_ONLY = re.compile(r"^(//|#|/\*|\*/|\*(\s|$)|--|\"\"\"|''')")


def is_candidate_line(line: str, min_tokens: int = 2) -> bool:
    stripped = line.strip()
    if not stripped or _COMMENT_ONLY.match(stripped):
        return False
    return len(tokenize_code(stripped)) >= min_tokens


def _task_parts(lines: Sequence[str], start: int, stop: int) -> tuple[str, str, str]:
    """(prefix, ground_truth, suffix) for the 0-based line range [start, stop).

    The hole's final newline is moved to the suffix.
    """
    prefix = "".join(lines[:start])
    gt = "".join(lines[start:stop])
    rest = "".join(lines[stop:])
    if gt.endswith("\n"):
        return prefix, gt[:-1], "\n" + rest
    return prefix, gt, rest


def extract_random_line_tasks(file: SourceFile, n: int = 3, seed: int = 0,
                              min_tokens: int = 2) -> list[CompletionTask]:
    """Mask up to ``n`` randomly chosen code lines of ``file``, one task each.

    Blank and comment-only lines, and lines with fewer than ``min_tokens``
    code tokens, are never chosen. Tasks come back in line order.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    candidates = [i for i, line in enumerate(file.lines) if is_candidate_line(line, min_tokens)]
    rng = random.Random(f"{seed}:{file.repo_id}:{file.rel_path}")
    chosen = sorted(rng.sample(candidates, min(n, len(candidates))))
    tasks = []
    for i in chosen:
        prefix, gt, suffix = _task_parts(file.lines, i, i + 1)
        tasks.append(CompletionTask(
            f"{file.repo_id}/{file.rel_path}#RL@{i + 1}", TaskKind.RANDOM_LINE,
            prefix, suffix, gt, file.ref, i + 1,
        ))
    return tasks


# --------------------------------------------------------------------------- function bodies

_CONTROL_WORDS = frozenset({
    "if", "for", "while", "switch", "catch", "synchronized", "else", "do", "try",
    "return", "with", "foreach", "using", "lock", "when", "match", "sizeof", "typeof",
})
_CALL_NAME = re.compile(r"([A-Za-z_$][\w$]*)\s*\(")
_BRACE_SIG = re.compile(r"\)\s*(?:(?:const|override|final|noexcept|throws\s+[\w.$,\s<>]+|->\s*[^{\s][^{]*|:\s*[^{\s][^{]*)\s*)*\{$")
_STRIP_LITERALS = re.compile(r'"(?:\\.|[^"\\])*"|\'(?:\\.|[^\'\\])*\'|`[^`]*`|/\*.*?\*/|//.*$')
_PY_DEF = re.compile(r"^(\s*)(?:async\s+)?def\s+\w+\s*\(")
_PY_STRIP = re.compile(r'"(?:\\.|[^"\\])*"|\'(?:\\.|[^\'\\])*\'|#.*$')


def _code_only(line: str, pattern: re.Pattern = _STRIP_LITERALS) -> str:
    return pattern.sub("", line.rstrip("\n"))


def _is_brace_signature(line: str) -> bool:
    code = _code_only(line).strip()
    if not code.endswith("{") or code.startswith("}"):
        return False
    m = _CALL_NAME.search(code)
    if m is None or m.group(1) in _CONTROL_WORDS:
        return False
    before = code[:m.start()].split()
    if before and before[-1] in ("new", "=", "return", "=>"):
        return False
    if "=" in code[:m.start()] or "=>" in code:
        return False
    return bool(_BRACE_SIG.search(code))


def _indent(line: str) -> int:
    return len(line.expandtabs(8)) - len(line.expandtabs(8).lstrip())


def _brace_body_spans(lines: Sequence[str]) -> Iterator[tuple[int, int] | None]:
    """Yield 0-based (first_body_line, closing_line) per signature; None when unbalanced."""
    for i, line in enumerate(lines):
        if not _is_brace_signature(line):
            continue
        code = _code_only(line)
        depth = code.count("{") - code.count("}")
        close = None
        for j in range(i + 1, len(lines)):
            code = _code_only(lines[j])
            depth += code.count("{") - code.count("}")
            if depth <= 0:
                close = j
                break
        yield (i + 1, close) if close is not None else None


def _indent_body_spans(lines: Sequence[str]) -> Iterator[tuple[int, int] | None]:
    """Yield 0-based (first_body_line, first_line_after_body) per ``def``."""
    for i, line in enumerate(lines):
        m = _PY_DEF.match(line)
        if m is None:
            continue
        header_indent = _indent(line)
        depth = 0
        header_end = None
        for h in range(i, len(lines)):
            code = _code_only(lines[h], _PY_STRIP)
            depth += sum(code.count(c) for c in "([{") - sum(code.count(c) for c in ")]}")
            if depth <= 0:
                if code.rstrip().endswith(":"):
                    header_end = h
                break
        if header_end is None:
            # includes one-line "def f(): return x", which has no block body
            yield None
            continue
        last = None
        for j in range(header_end + 1, len(lines)):
            if not lines[j].strip():
                continue
            if _indent(lines[j]) <= header_indent:
                break
            last = j
        if last is None:
            yield None
            continue
        yield (header_end + 1, last + 1)


def extract_function_body_tasks(file: SourceFile) -> list[CompletionTask]:
    """One task per function whose body can be delimited heuristically.

    Brace languages: a signature line ending in ``{`` whose body runs to the
    line that balances the braces; the braces themselves stay in the prefix
    and suffix. Indent languages: a ``def`` header and its deeper-indented
    block. Nested functions yield a task each. Functions with unbalanced or
    empty bodies are skipped and counted in the debug log.
    """
    if file.language is Language.BRACE:
        spans = _brace_body_spans(file.lines)
    elif file.language is Language.INDENT:
        spans = _indent_body_spans(file.lines)
    else:
        raise UnsupportedLanguage(f"no function extractor for {file.rel_path} ({file.language.value})")
    tasks = []
    skipped = 0
    for span in spans:
        if span is None:
            skipped += 1
            continue
        start, stop = span
        prefix, gt, suffix = _task_parts(file.lines, start, stop)
        if not gt.strip():
            skipped += 1
            continue
        tasks.append(CompletionTask(
            f"{file.repo_id}/{file.rel_path}#FB@{start + 1}", TaskKind.FUNCTION_BODY,
            prefix, suffix, gt, file.ref, start + 1,
        ))
    if skipped:
        logger.debug("%s: skipped %d unparseable or empty function bodies", file.rel_path, skipped)
    tasks.sort(key=lambda t: t.hole_start_line)
    return tasks


# --------------------------------------------------------------------------- split

def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def split_dataset(files: Sequence[SourceFile], test_frac: float = 0.10,
                  val_frac: float = 0.10, seed: int = 0) -> DatasetSplit:
    """Seeded shuffle, then test / validation / retrieval slices in that order."""
    for name, frac in (("test_frac", test_frac), ("val_frac", val_frac)):
        if not 0.0 <= frac < 1.0:
            raise InvalidFraction(f"{name} must be in [0, 1), got {frac}")
    if test_frac + val_frac >= 1.0:
        raise InvalidFraction(f"test_frac + val_frac must be < 1, got {test_frac + val_frac}")
    if not files:
        raise EmptyCorpus("cannot split an empty file list")
    order = sorted(files, key=lambda f: f.ref)
    random.Random(seed).shuffle(order)
    n = len(order)
    n_test = _round_half_up(test_frac * n)
    n_val = _round_half_up(val_frac * n)
    return DatasetSplit(
        retrieval_files=tuple(order[n_test + n_val:]),
        validation_files=tuple(order[n_test:n_test + n_val]),
        test_files=tuple(order[:n_test]),
        seed=seed,
    )


def extract_tasks(files: Iterable[SourceFile], random_lines: int = 3, seed: int = 0,
                  function_bodies: bool = True, min_tokens: int = 2) -> list[CompletionTask]:
    """Random-line tasks for every file plus function-body tasks where supported."""
    tasks = []
    for f in files:
        tasks.extend(extract_random_line_tasks(f, random_lines, seed, min_tokens))
        if function_bodies and f.language is not Language.OTHER:
            tasks.extend(extract_function_body_tasks(f))
    tasks.sort(key=lambda t: t.task_id)
    return tasks


# --------------------------------------------------------------------------- JSON Lines

def write_jsonl(path: str | Path, records: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=False))
            fh.write("\n")


def read_jsonl(path: str | Path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def write_snippets(path: str | Path, snippets: Iterable[CodeSnippet]) -> None:
    write_jsonl(path, (s.to_dict() for s in snippets))


def read_snippets(path: str | Path) -> list[CodeSnippet]:
    return [CodeSnippet.from_dict(d) for d in read_jsonl(path)]


def write_tasks(path: str | Path, tasks: Iterable[CompletionTask]) -> None:
    write_jsonl(path, (t.to_dict() for t in tasks))


def read_tasks(path: str | Path) -> list[CompletionTask]:
    return [CompletionTask.from_dict(d) for d in read_jsonl(path)]


__all__ = [
    "CodeSnippet", "CompletionTask", "DatasetSplit", "Language", "SourceFile", "TaskKind",
    "chunk_file", "extract_function_body_tasks", "extract_random_line_tasks", "extract_tasks",
    "ingest_repository", "is_candidate_line", "language_for_path", "read_snippets",
    "read_tasks", "split_dataset", "write_snippets", "write_tasks",
]
