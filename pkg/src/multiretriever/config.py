"""Run configuration: one JSON document, defaults for everything optional.

Secrets never live in the file; a backend names the environment variable
that holds its API key.
"""

from __future__ import annotations

import dataclasses
import enum
import json
import re
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .embed import BackendConfig
from .errors import ConfigParseError, MultiRetrieverError, UnknownKey
from .generate import PromptConfig, Strategy
from .retrievers import DEFAULT_TEMPLATE, Perspective, PerspectiveId, RetrievalConfig

RESOLVED_NAME = "resolved-config.json"

DEFAULT_GLOBS = ("*.java", "*.py", "*.js", "*.ts", "*.go", "*.c", "*.cc", "*.cpp", "*.cs", "*.rs")
DEFAULT_STRATEGIES = ("lexical", "hypoline", "summary", "union", "maxsim", "logistic", "linucb")


@dataclass
class CorpusConfig:
    paths: list[str]
    globs: list[str] = field(default_factory=lambda: list(DEFAULT_GLOBS))


@dataclass
class SplitConfig:
    test_frac: float = 0.10
    val_frac: float = 0.10


@dataclass
class ChunkConfig:
    window: int = 20
    stride: int = 10

    def __post_init__(self) -> None:
        if self.window < 1 or not 1 <= self.stride <= self.window:
            raise ValueError("need window >= 1 and 1 <= stride <= window")


@dataclass
class TaskConfig:
    random_lines: int = 3
    function_bodies: bool = True
    min_tokens: int = 2


@dataclass
class PerspectiveConfig:
    id: PerspectiveId
    template: int | None = None

    def to_perspective(self) -> Perspective:
        return Perspective(self.id, self.template)


def _default_perspectives() -> list[PerspectiveConfig]:
    return [PerspectiveConfig(pid, DEFAULT_TEMPLATE[pid]) for pid in DEFAULT_TEMPLATE]


@dataclass
class BackendsConfig:
    embed: BackendConfig = field(default_factory=BackendConfig)
    generate: BackendConfig = field(default_factory=lambda: BackendConfig(model_name="scripted"))


@dataclass
class SelectorConfig:
    strategies: list[str] = field(default_factory=lambda: list(DEFAULT_STRATEGIES))
    alpha: float = 0.1
    passes: int = 1
    shared: bool = False
    full_information: bool = False
    logistic_lr: float = 0.1
    logistic_epochs: int = 500
    logistic_l2: float = 1e-4

    def __post_init__(self) -> None:
        for name in self.strategies:
            Strategy.parse(name)
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.passes < 1:
            raise ValueError("passes must be >= 1")


@dataclass
class EvalConfig:
    repeat: int = 1
    error_policy: str = "count"
    record_timing: bool = False

    def __post_init__(self) -> None:
        if self.error_policy not in ("count", "skip"):
            raise ValueError("error_policy must be 'count' or 'skip'")
        if self.repeat < 1:
            raise ValueError("repeat must be >= 1")


@dataclass
class RunConfig:
    corpus: CorpusConfig
    backend: BackendsConfig = field(default_factory=BackendsConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    chunking: ChunkConfig = field(default_factory=ChunkConfig)
    tasks: TaskConfig = field(default_factory=TaskConfig)
    perspectives: list[PerspectiveConfig] = field(default_factory=_default_perspectives)
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    selector: SelectorConfig = field(default_factory=SelectorConfig)
    prompt: PromptConfig = field(default_factory=PromptConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    output_dir: str | None = None
    cache_dir: str | None = None
    seed: int = 0
    jobs: int = 1

    @property
    def active_perspectives(self) -> list[Perspective]:
        return [p.to_perspective() for p in self.perspectives]

    @property
    def strategies(self) -> list[Strategy]:
        return [Strategy.parse(s) for s in self.selector.strategies]

    def to_dict(self) -> dict:
        return _plain(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


# --------------------------------------------------------------------------- conversion

def _plain(obj: Any) -> Any:
    if dataclasses.is_dataclass(obj):
        return {f.name: _plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    return obj


class _Locator:
    """Best-effort line numbers for keys, for error messages."""

    def __init__(self, text: str) -> None:
        self.text = text

    def line_of(self, key: str) -> int | None:
        m = re.search(r'"' + re.escape(key) + r'"\s*:', self.text)
        return self.text.count("\n", 0, m.start()) + 1 if m else None


def _type_name(tp: Any) -> str:
    return getattr(tp, "__name__", str(tp))


def _convert(value: Any, tp: Any, path: str, loc: _Locator) -> Any:
    def fail(msg: str) -> ConfigParseError:
        return ConfigParseError(msg, field=path, line=loc.line_of(path.rsplit(".", 1)[-1].split("[")[0]))

    origin = typing.get_origin(tp)
    if origin in (typing.Union, types.UnionType):
        args = typing.get_args(tp)
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _convert(value, inner[0], path, loc)
    if tp is BackendsConfig and isinstance(value, dict) and not set(value) <= {"embed", "generate"}:
        # one flat backend serves both roles
        value = {"embed": value, "generate": value}
    if dataclasses.is_dataclass(tp):
        if not isinstance(value, dict):
            raise fail(f"expected an object for {_type_name(tp)}")
        return _build(tp, value, path, loc)
    if isinstance(tp, type) and issubclass(tp, enum.Enum):
        try:
            return tp(value)
        except ValueError:
            raise fail(f"{value!r} is not one of {[m.value for m in tp]}") from None
    if tp is bool:
        if not isinstance(value, bool):
            raise fail("expected true or false")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise fail("expected an integer")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise fail("expected a number")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise fail("expected a string")
        return value
    if origin in (list, tuple):
        if not isinstance(value, list):
            raise fail("expected a list")
        item = typing.get_args(tp)[0]
        items = [_convert(v, item, f"{path}[{i}]", loc) for i, v in enumerate(value)]
        return items if origin is list else tuple(items)
    if origin is dict:
        if not isinstance(value, dict):
            raise fail("expected an object")
        val_tp = typing.get_args(tp)[1]
        return {str(k): _convert(v, val_tp, f"{path}.{k}", loc) for k, v in value.items()}
    return value


def _build(cls: type, data: dict, path: str, loc: _Locator) -> Any:
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls) if f.init}
    for key in data:
        if key not in names:
            raise UnknownKey(key, path, line=loc.line_of(key))
    kwargs = {}
    for f in dataclasses.fields(cls):
        if not f.init or f.name not in data:
            if f.init and f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
                dotted = f"{path}.{f.name}" if path else f.name
                raise ConfigParseError("missing required key", field=dotted)
            continue
        dotted = f"{path}.{f.name}" if path else f.name
        kwargs[f.name] = _convert(data[f.name], hints[f.name], dotted, loc)
    try:
        return cls(**kwargs)
    except (MultiRetrieverError, ValueError, TypeError) as exc:
        if isinstance(exc, ConfigParseError):
            raise
        raise ConfigParseError(str(exc), field=path or cls.__name__, line=loc.line_of(path.rsplit(".", 1)[-1])) from exc


def parse_config(text: str, base_dir: str | Path = ".") -> RunConfig:
    """Parse and validate a JSON config; relative paths resolve against ``base_dir``."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigParseError(f"invalid JSON: {exc.msg}", line=exc.lineno, column=exc.colno) from None
    if not isinstance(data, dict):
        raise ConfigParseError("the configuration must be a JSON object", line=1)
    loc = _Locator(text)
    cfg = _build(RunConfig, data, "", loc)
    base = Path(base_dir).resolve()

    def absolute(p: str) -> str:
        return str((base / p).resolve()) if not Path(p).is_absolute() else str(Path(p))

    resolved = []
    for i, p in enumerate(cfg.corpus.paths):
        full = absolute(p)
        if not Path(full).is_dir():
            raise ConfigParseError(f"corpus path {full} is not a directory",
                                   field=f"corpus.paths[{i}]", line=loc.line_of("paths"))
        resolved.append(full)
    if not resolved:
        raise ConfigParseError("corpus.paths must name at least one directory", field="corpus.paths")
    cfg.corpus.paths = resolved
    if cfg.output_dir is not None:
        cfg.output_dir = absolute(cfg.output_dir)
    if cfg.cache_dir is not None:
        cfg.cache_dir = absolute(cfg.cache_dir)
    for b in (cfg.backend.embed, cfg.backend.generate):
        if b.script_path is not None:
            b.script_path = absolute(b.script_path)
    return cfg


def load_config(path: str | Path) -> RunConfig:
    """Read a config file; see :func:`parse_config`."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigParseError(f"config file {path} does not exist") from None
    return parse_config(text, path.parent)


def write_resolved(cfg: RunConfig, out_dir: str | Path) -> Path:
    """Echo the fully-resolved config next to the run's artifacts."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    target = out / RESOLVED_NAME
    target.write_text(cfg.to_json(), encoding="utf-8")
    return target
