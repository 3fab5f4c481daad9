"""Exact Match and Edit Similarity, and the per-task evaluation record."""

from __future__ import annotations

from dataclasses import dataclass, field

from . import kernels


def levenshtein_distance(a: str, b: str) -> int:
    """Unit-cost insert/delete/substitute distance over code points."""
    return kernels.levenshtein(a, b)


def edit_similarity(gen: str, gt: str) -> float:
    """100 * (1 - lev / max length); two empty strings are identical (100)."""
    longest = max(len(gen), len(gt))
    if longest == 0:
        return 100.0
    return 100.0 * (1.0 - levenshtein_distance(gen, gt) / longest)


def exact_match(gen: str, gt: str) -> int:
    """1 iff the strings agree after trimming outer whitespace."""
    return int(gen.strip() == gt.strip())


@dataclass
class EvalRecord:
    task_id: str
    kind: str
    strategy: str
    arm: int | None
    generation: str
    em: int
    es: float
    error: str | None = None
    retrieval_ids: list[str] = field(default_factory=list)
    prompt_hash: str | None = None
    elapsed_ms: float | None = None
    repeat: int = 0

    def __post_init__(self) -> None:
        if self.em not in (0, 1):
            raise ValueError("em must be 0 or 1")
        if not 0.0 <= self.es <= 100.0:
            raise ValueError("es must lie in [0, 100]")
        if self.em == 1 and self.es != 100.0:
            raise ValueError("an exact match must have es == 100")

    @classmethod
    def score(cls, *, generation: str, ground_truth: str, **kw) -> EvalRecord:
        """Build a record with EM and ES computed on outer-trimmed strings."""
        gen, gt = generation.strip(), ground_truth.strip()
        return cls(generation=generation, em=exact_match(gen, gt), es=edit_similarity(gen, gt), **kw)

    @property
    def gen_len(self) -> int:
        return len(self.generation)

    def to_dict(self) -> dict:
        d = {
            "task_id": self.task_id,
            "kind": self.kind,
            "strategy": self.strategy,
            "arm": self.arm,
            "retrieval_ids": list(self.retrieval_ids),
            "em": self.em,
            "es": self.es,
            "gen_len": self.gen_len,
            "elapsed_ms": self.elapsed_ms,
            "generation": self.generation,
            "prompt_hash": self.prompt_hash,
        }
        if self.repeat:
            d["repeat"] = self.repeat
        if self.error is not None:
            d["error"] = self.error
        return d

    @classmethod
    def from_dict(cls, d: dict) -> EvalRecord:
        return cls(
            task_id=d["task_id"], kind=d["kind"], strategy=d["strategy"], arm=d.get("arm"),
            generation=d.get("generation", ""), em=int(d["em"]), es=float(d["es"]),
            error=d.get("error"), retrieval_ids=list(d.get("retrieval_ids", [])),
            prompt_hash=d.get("prompt_hash"), elapsed_ms=d.get("elapsed_ms"),
            repeat=int(d.get("repeat", 0)),
        )
