"""On-disk formats for dense and sparse indexes.

Dense file layout (little-endian)::

    b"PDIX" | version u16 | dim u32 | count u64
    count x (id_len u16 | id utf-8 bytes | dim x float32)
    crc32 u32 over every preceding byte

The sparse index is a JSON document wrapping the BM25 statistics together
with a format tag, version and CRC32 of the canonical payload. Snippet
metadata, when present, lives in a ``<path>.meta.jsonl`` sidecar.
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from ..errors import CorruptIndex, MultiRetrieverError
from .dense import DenseIndex
from .sparse import SparseIndex

MAGIC = b"PDIX"
VERSION = 1
SPARSE_FORMAT = "multiretriever-bm25"
_HEADER = struct.Struct("<4sHIQ")
_ID_LEN = struct.Struct("<H")
_CRC = struct.Struct("<I")


class IoError(MultiRetrieverError, OSError):
    pass


def encode_vector_record(snippet_id: str, values: np.ndarray) -> bytes:
    raw_id = snippet_id.encode("utf-8")
    if len(raw_id) > 0xFFFF:
        raise ValueError("snippet id longer than 65535 bytes")
    return _ID_LEN.pack(len(raw_id)) + raw_id + np.asarray(values, dtype="<f4").tobytes()


def decode_vector_record(buf: bytes, offset: int, dim: int) -> tuple[str, np.ndarray, int]:
    try:
        (n,) = _ID_LEN.unpack_from(buf, offset)
        offset += _ID_LEN.size
        sid = buf[offset:offset + n].decode("utf-8")
        offset += n
        end = offset + 4 * dim
        if end > len(buf) or len(sid.encode("utf-8")) != n:
            raise CorruptIndex("vector record runs past end of data")
        values = np.frombuffer(buf, dtype="<f4", count=dim, offset=offset).astype(np.float32)
    except (struct.error, UnicodeDecodeError, ValueError) as exc:
        raise CorruptIndex(f"malformed vector record: {exc}") from exc
    return sid, values, end


def _sidecar(path: Path) -> Path:
    return path.with_name(path.name + ".meta.jsonl")


def _write_metadata(path: Path, metadata: dict) -> None:
    side = _sidecar(path)
    if not metadata:
        side.unlink(missing_ok=True)
        return
    with open(side, "w", encoding="utf-8") as fh:
        for sid in sorted(metadata):
            fh.write(json.dumps(metadata[sid].to_dict(), ensure_ascii=False) + "\n")


def _read_metadata(path: Path) -> dict:
    from ..corpus import CodeSnippet

    side = _sidecar(path)
    if not side.exists():
        return {}
    try:
        with open(side, encoding="utf-8") as fh:
            snippets = [CodeSnippet.from_dict(json.loads(line)) for line in fh if line.strip()]
    except (ValueError, KeyError) as exc:
        raise CorruptIndex(f"bad metadata sidecar {side}: {exc}") from exc
    return {s.snippet_id: s for s in snippets}


def _dense_bytes(index: DenseIndex) -> bytes:
    parts = [_HEADER.pack(MAGIC, VERSION, index.dim, len(index))]
    rows = index.rows
    for i, sid in enumerate(index.ids):
        parts.append(encode_vector_record(sid, rows[i]))
    body = b"".join(parts)
    return body + _CRC.pack(zlib.crc32(body))


def _dense_from_bytes(buf: bytes) -> DenseIndex:
    if len(buf) < _HEADER.size + _CRC.size:
        raise CorruptIndex("file too short for a dense index")
    magic, version, dim, count = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise CorruptIndex(f"bad magic {magic!r}")
    if version != VERSION:
        raise CorruptIndex(f"unsupported dense index version {version}")
    body, (crc,) = buf[:-_CRC.size], _CRC.unpack_from(buf, len(buf) - _CRC.size)
    if zlib.crc32(body) != crc:
        raise CorruptIndex("checksum mismatch")
    if dim < 1:
        raise CorruptIndex("dimension must be >= 1")
    index = DenseIndex(dim)
    offset = _HEADER.size
    for _ in range(count):
        sid, values, offset = decode_vector_record(body, offset, dim)
        try:
            index.add(sid, values)
        except MultiRetrieverError as exc:
            raise CorruptIndex(str(exc)) from exc
    if offset != len(body):
        raise CorruptIndex("trailing bytes after last record")
    return index


def _sparse_payload(index: SparseIndex) -> dict:
    return {
        "doc_term_freqs": index.doc_term_freqs,
        "doc_lengths": index.doc_lengths,
        "avg_doc_length": index.avg_doc_length,
        "doc_freq": index.doc_freq,
        "n_docs": index.n_docs,
        "k1": index.k1,
        "b": index.b,
    }


def _canonical(payload: dict) -> bytes:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode()


def persist_index(index: DenseIndex | SparseIndex, path: str | Path) -> None:
    path = Path(path)
    try:
        if isinstance(index, DenseIndex):
            path.write_bytes(_dense_bytes(index))
        elif isinstance(index, SparseIndex):
            payload = _sparse_payload(index)
            doc = {"format": SPARSE_FORMAT, "version": VERSION,
                   "crc32": zlib.crc32(_canonical(payload)), "index": payload}
            path.write_text(json.dumps(doc, sort_keys=True, ensure_ascii=False), encoding="utf-8")
        else:
            raise TypeError(f"cannot persist {type(index).__name__}")
        _write_metadata(path, index.metadata)
    except OSError as exc:
        raise IoError(f"cannot write index {path}: {exc}") from exc


def restore_index(path: str | Path) -> DenseIndex | SparseIndex:
    path = Path(path)
    try:
        buf = path.read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read index {path}: {exc}") from exc
    if buf[:4] == MAGIC:
        index = _dense_from_bytes(buf)
    else:
        index = _sparse_from_bytes(buf)
    index.metadata = _read_metadata(path)
    return index


def _sparse_from_bytes(buf: bytes) -> SparseIndex:
    try:
        doc = json.loads(buf.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptIndex(f"not a dense index and not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != SPARSE_FORMAT:
        raise CorruptIndex("bad magic: unknown index format")
    if doc.get("version") != VERSION:
        raise CorruptIndex(f"unsupported sparse index version {doc.get('version')}")
    payload = doc.get("index")
    if not isinstance(payload, dict) or zlib.crc32(_canonical(payload)) != doc.get("crc32"):
        raise CorruptIndex("checksum mismatch")
    try:
        return SparseIndex(
            doc_term_freqs={k: dict(v) for k, v in payload["doc_term_freqs"].items()},
            doc_lengths=dict(payload["doc_lengths"]),
            avg_doc_length=float(payload["avg_doc_length"]),
            doc_freq=dict(payload["doc_freq"]),
            n_docs=int(payload["n_docs"]),
            k1=float(payload["k1"]),
            b=float(payload["b"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptIndex(f"missing or malformed field: {exc}") from exc
