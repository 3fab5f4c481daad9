"""Embedding vector value type."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np


@dataclass(frozen=True, eq=False)
class EmbeddingVector:
    """A fixed-dimension real vector with its Euclidean norm cached.

    ``values`` is stored as a read-only float64 array. A zero vector is a valid
    value (empty text embeds to it) and has cosine 0 against everything.
    """

    values: np.ndarray
    norm: float = field(init=False)

    def __post_init__(self) -> None:
        arr = np.array(self.values, dtype=np.float64).reshape(-1)
        if arr.size == 0:
            raise ValueError("embedding must have at least one dimension")
        if not np.all(np.isfinite(arr)):
            raise ValueError("embedding values must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)
        object.__setattr__(self, "norm", math.sqrt(float(arr @ arr)))

    @classmethod
    def of(cls, values: Iterable[float]) -> EmbeddingVector:
        return cls(np.fromiter(values, dtype=np.float64))

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])

    @property
    def is_zero(self) -> bool:
        return self.norm == 0.0

    def cosine(self, other: EmbeddingVector) -> float:
        if self.dim != other.dim:
            raise ValueError(f"dimension mismatch: {self.dim} vs {other.dim}")
        if self.is_zero or other.is_zero:
            return 0.0
        return float(self.values @ other.values) / (self.norm * other.norm)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EmbeddingVector):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    def __repr__(self) -> str:
        return f"EmbeddingVector(dim={self.dim}, norm={self.norm:.6g})"
