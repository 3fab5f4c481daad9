"""Kernel dispatch: compiled extension when importable, pure Python otherwise.

Set ``MULTIRETRIEVER_PURE_PYTHON=1`` to force the fallback (used by the
benchmark and by the tests that compare both paths).
"""

from __future__ import annotations

import os

from . import _kernels_py

IMPLEMENTATIONS = {"python": _kernels_py}

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None
else:
    IMPLEMENTATIONS["cython"] = _compiled

if _compiled is not None and not os.environ.get("MULTIRETRIEVER_PURE_PYTHON"):
    BACKEND = "cython"
    _impl = _compiled
else:
    BACKEND = "python"
    _impl = _kernels_py

levenshtein = _impl.levenshtein
_cosine_scores = _impl.cosine_scores


def cosine_scores(rows, query):
    import numpy as np

    return _cosine_scores(
        np.ascontiguousarray(rows, dtype=np.float32),
        np.ascontiguousarray(query, dtype=np.float64),
    )


__all__ = ["BACKEND", "IMPLEMENTATIONS", "cosine_scores", "levenshtein"]
