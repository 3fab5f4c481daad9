"""Code tokenizer and token-set Jaccard similarity."""

from __future__ import annotations

import re
from typing import Iterable

_ALNUM_RUN = re.compile(r"[^\W_]+")
# lower/digit -> Upper ("getDefault"), and acronym -> Word ("HTTPServer")
_CAMEL = re.compile(r"(?<=[a-z0-9])(?=[A-Z])|(?<=[A-Z])(?=[A-Z][a-z])")


def tokenize_code(text: str) -> list[str]:
    """Split ``text`` into lowercase code tokens.

    Runs of non-alphanumeric characters (underscore included) separate tokens,
    and camelCase boundaries split further:

    >>> tokenize_code("getDefault(x_1)")
    ['get', 'default', 'x', '1']
    """
    tokens: list[str] = []
    for run in _ALNUM_RUN.findall(text):
        tokens.extend(part.lower() for part in _CAMEL.split(run) if part)
    return tokens


def jaccard_similarity(a: Iterable[str], b: Iterable[str]) -> float:
    """|A ∩ B| / |A ∪ B| over token sets; two empty inputs count as identical."""
    sa, sb = set(a), set(b)
    if not sa and not sb:
        return 1.0
    if not sa or not sb:
        return 0.0
    return len(sa & sb) / len(sa | sb)
