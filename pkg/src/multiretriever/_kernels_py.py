"""Pure-Python implementations of the compiled kernels in ``_kernels.pyx``."""

from __future__ import annotations

import numpy as np


def levenshtein(a: str, b: str) -> int:
    """Unit-cost edit distance over code points (two-row dynamic program)."""
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j - 1] + (ca != cb), prev[j] + 1, cur[j - 1] + 1))
        prev = cur
    return prev[-1]


def cosine_scores(rows: np.ndarray, query: np.ndarray) -> np.ndarray:
    """Cosine of every row against ``query``; zero-norm rows or query give 0."""
    rows64 = np.asarray(rows, dtype=np.float64)
    q = np.asarray(query, dtype=np.float64)
    if rows64.ndim != 2 or rows64.shape[1] != q.shape[0]:
        raise ValueError("query length does not match row width")
    out = np.zeros(rows64.shape[0], dtype=np.float64)
    qn = float(np.sqrt(q @ q))
    if qn == 0.0:
        return out
    rn = np.sqrt(np.einsum("ij,ij->i", rows64, rows64))
    nz = rn > 0.0
    out[nz] = (rows64[nz] @ q) / (rn[nz] * qn)
    return out
