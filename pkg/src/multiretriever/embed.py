"""Embedding and generation backends.

Two kinds sit behind one boundary: a deterministic local backend (hashed
bag-of-tokens embedder plus a scripted generator) for offline runs and tests,
and a remote HTTP backend. Anything that maps text to a vector can serve as
an embedder; the pipeline only relies on the small protocols below.

Wire formats (remote)::

    embed:     POST {"model", "input"}                               -> {"embedding": [...]}
    generate:  POST {"model", "prompt", "max_tokens", "temperature": 0} -> {"text": "..."}
"""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import math
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Protocol

import httpx
import numpy as np

from .errors import BackendBadResponse, BackendUnreachable, InvalidParam, Unauthorized
from .index.text import tokenize_code
from .vectors import EmbeddingVector

logger = logging.getLogger(__name__)


class BackendKind(str, enum.Enum):
    LOCAL = "Local"
    REMOTE = "Remote"


@dataclass
class BackendConfig:
    kind: BackendKind = BackendKind.LOCAL
    endpoint_url: str | None = None
    model_name: str = "local-hash"
    api_key_env_var: str | None = None
    dim: int = 256
    timeout: float = 30.0
    max_retries: int = 3
    backoff_s: float = 0.25
    parallelism: int = 4
    # Local generator table: sha256(prompt) hex -> continuation
    script: dict[str, str] = field(default_factory=dict)
    script_path: str | None = None
    # free text, e.g. which hidden-state pooling a remote server applies
    notes: str = ""

    def __post_init__(self) -> None:
        self.kind = BackendKind(self.kind)
        if self.dim < 1:
            raise InvalidParam("backend dim must be >= 1")
        if self.max_retries < 0:
            raise InvalidParam("max_retries must be >= 0")
        if self.kind is BackendKind.REMOTE and not self.endpoint_url:
            raise InvalidParam("a Remote backend requires endpoint_url")


class Embedder(Protocol):
    model_name: str
    dim: int

    def embed(self, text: str) -> EmbeddingVector: ...


class Generator(Protocol):
    model_name: str

    def generate(self, prompt: str, max_tokens: int) -> str: ...


def prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


# --------------------------------------------------------------------------- local

def _bucket(feature: str, dim: int) -> int:
    digest = hashlib.blake2b(feature.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") % dim


def local_embed(text: str, dim: int) -> EmbeddingVector:
    """Hashed unigram+bigram term frequencies, L2-normalized.

    Text without tokens embeds to the zero vector.
    """
    if dim < 1:
        raise InvalidParam("dim must be >= 1")
    tokens = tokenize_code(text)
    vec = np.zeros(dim, dtype=np.float64)
    for tok in tokens:
        vec[_bucket("u:" + tok, dim)] += 1.0
    for left, right in zip(tokens, tokens[1:]):
        vec[_bucket(f"b:{left} {right}", dim)] += 1.0
    norm = math.sqrt(float(vec @ vec))
    if norm > 0.0:
        vec /= norm
    return EmbeddingVector(vec)


class LocalEmbedder:
    def __init__(self, dim: int = 256, model_name: str = "local-hash") -> None:
        if dim < 1:
            raise InvalidParam("dim must be >= 1")
        self.dim = dim
        self.model_name = model_name

    def embed(self, text: str) -> EmbeddingVector:
        return local_embed(text, self.dim)


class ScriptedGenerator:
    """Deterministic mock: looks the prompt's SHA-256 up in a table, else ``""``."""

    def __init__(self, table: Mapping[str, str] | None = None, model_name: str = "scripted") -> None:
        self.table = dict(table or {})
        self.model_name = model_name

    @classmethod
    def from_prompts(cls, mapping: Mapping[str, str], **kw) -> ScriptedGenerator:
        return cls({prompt_hash(p): out for p, out in mapping.items()}, **kw)

    def generate(self, prompt: str, max_tokens: int) -> str:
        if max_tokens < 1:
            raise InvalidParam("max_tokens must be >= 1")
        return self.table.get(prompt_hash(prompt), "")


class CallableGenerator:
    """Adapts ``fn(prompt, max_tokens) -> str`` to the generator protocol."""

    def __init__(self, fn: Callable[[str, int], str], model_name: str = "callable") -> None:
        self.fn = fn
        self.model_name = model_name

    def generate(self, prompt: str, max_tokens: int) -> str:
        if max_tokens < 1:
            raise InvalidParam("max_tokens must be >= 1")
        return self.fn(prompt, max_tokens)


# --------------------------------------------------------------------------- remote

_TRANSIENT_STATUS = frozenset({408, 425, 429, 500, 502, 503, 504})


class RemoteBackend:
    """HTTP client for one endpoint, usable as embedder or generator.

    Transient failures (connection errors, timeouts, 408/429/5xx) are retried
    ``max_retries`` times with exponential backoff; 401/403 fail immediately.
    """

    def __init__(self, cfg: BackendConfig, *, client: httpx.Client | None = None,
                 sleep: Callable[[float], None] = time.sleep) -> None:
        if cfg.kind is not BackendKind.REMOTE:
            raise InvalidParam("RemoteBackend needs a Remote config")
        self.cfg = cfg
        self.model_name = cfg.model_name
        self.dim = cfg.dim
        self._client = client or httpx.Client(timeout=cfg.timeout)
        self._sleep = sleep
        self._slots = threading.BoundedSemaphore(max(1, cfg.parallelism))

    def close(self) -> None:
        self._client.close()

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.cfg.api_key_env_var:
            key = os.environ.get(self.cfg.api_key_env_var)
            if key:
                headers["Authorization"] = f"Bearer {key}"
        return headers

    def _post(self, payload: dict) -> dict:
        last: Exception | None = None
        for attempt in range(self.cfg.max_retries + 1):
            if attempt:
                self._sleep(self.cfg.backoff_s * 2 ** (attempt - 1))
            try:
                with self._slots:
                    resp = self._client.post(self.cfg.endpoint_url, json=payload, headers=self._headers())
            except httpx.TransportError as exc:
                last = exc
                logger.debug("attempt %d to %s failed: %s", attempt + 1, self.cfg.endpoint_url, exc)
                continue
            if resp.status_code in (401, 403):
                raise Unauthorized(f"{self.cfg.endpoint_url} returned {resp.status_code}")
            if resp.status_code in _TRANSIENT_STATUS:
                last = BackendUnreachable(f"HTTP {resp.status_code}")
                continue
            if resp.status_code >= 400:
                raise BackendBadResponse(f"{self.cfg.endpoint_url} returned {resp.status_code}")
            try:
                body = resp.json()
            except (json.JSONDecodeError, ValueError) as exc:
                raise BackendBadResponse(f"response is not JSON: {exc}") from exc
            if not isinstance(body, dict):
                raise BackendBadResponse("response is not a JSON object")
            return body
        raise BackendUnreachable(
            f"{self.cfg.endpoint_url} unreachable after {self.cfg.max_retries + 1} attempts: {last}")

    def embed(self, text: str) -> EmbeddingVector:
        body = self._post({"model": self.cfg.model_name, "input": text})
        values = body.get("embedding")
        if not isinstance(values, list) or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in values):
            raise BackendBadResponse("missing or non-numeric 'embedding'")
        if len(values) != self.cfg.dim:
            raise BackendBadResponse(f"expected dim {self.cfg.dim}, got {len(values)}")
        arr = np.asarray(values, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise BackendBadResponse("embedding contains non-finite values")
        return EmbeddingVector(arr)

    def generate(self, prompt: str, max_tokens: int) -> str:
        if max_tokens < 1:
            raise InvalidParam("max_tokens must be >= 1")
        body = self._post({"model": self.cfg.model_name, "prompt": prompt,
                           "max_tokens": max_tokens, "temperature": 0})
        text = body.get("text")
        if not isinstance(text, str):
            raise BackendBadResponse("missing 'text' in generation response")
        # some servers echo the prompt
        return text[len(prompt):] if text.startswith(prompt) and prompt else text


def remote_embed(cfg: BackendConfig, text: str) -> EmbeddingVector:
    backend = RemoteBackend(cfg)
    try:
        return backend.embed(text)
    finally:
        backend.close()


def _load_script(cfg: BackendConfig) -> dict[str, str]:
    table = dict(cfg.script)
    if cfg.script_path:
        table.update(json.loads(Path(cfg.script_path).read_text(encoding="utf-8")))
    return table


def generate_text(cfg: BackendConfig, prompt: str, max_tokens: int) -> str:
    """Greedy completion of ``prompt``; the prompt itself is not returned."""
    if max_tokens < 1:
        raise InvalidParam("max_tokens must be >= 1")
    if cfg.kind is BackendKind.LOCAL:
        return ScriptedGenerator(_load_script(cfg), cfg.model_name).generate(prompt, max_tokens)
    backend = RemoteBackend(cfg)
    try:
        return backend.generate(prompt, max_tokens)
    finally:
        backend.close()


def make_embedder(cfg: BackendConfig) -> Embedder:
    if cfg.kind is BackendKind.LOCAL:
        return LocalEmbedder(cfg.dim, cfg.model_name)
    return RemoteBackend(cfg)


def make_generator(cfg: BackendConfig) -> Generator:
    if cfg.kind is BackendKind.LOCAL:
        return ScriptedGenerator(_load_script(cfg), cfg.model_name)
    return RemoteBackend(cfg)
