"""Benchmark execution over strategies and aggregation into FB / RL / Avg rows."""

from __future__ import annotations

import csv
import io
import json
import math
import statistics
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import CompletionTask, TaskKind
from .errors import EmptyInput, InvalidParam
from .metrics import EvalRecord

AVG = "Avg"
ERROR_POLICIES = ("count", "skip")
_KIND_ORDER = {TaskKind.FUNCTION_BODY.value: 0, TaskKind.RANDOM_LINE.value: 1}


def _abbrev(kind: str) -> str:
    return TaskKind(kind).abbrev


@dataclass(frozen=True)
class Cell:
    """One table cell: EM reported x100, ES on its native 0-100 scale."""

    count: int
    em: float
    es: float
    em_std: float | None = None
    es_std: float | None = None

    def to_dict(self) -> dict:
        d = {"count": self.count, "em": self.em, "es": self.es}
        if self.em_std is not None:
            d["em_std"] = self.em_std
            d["es_std"] = self.es_std
        return d


@dataclass
class Report:
    """``cells[strategy][kind]`` with kind in {"FB", "RL", "Avg"}."""

    cells: dict[str, dict[str, Cell]] = field(default_factory=dict)
    errors: dict[str, int] = field(default_factory=dict)
    error_policy: str = "count"

    @property
    def strategies(self) -> list[str]:
        return list(self.cells)

    def cell(self, strategy: str, kind: str) -> Cell:
        return self.cells[strategy][kind]

    def rows(self) -> list[tuple[str, str, Cell]]:
        return [(s, k, c) for s, by_kind in self.cells.items() for k, c in by_kind.items()]

    def to_dict(self) -> dict:
        return {
            "error_policy": self.error_policy,
            "errors": dict(self.errors),
            "strategies": {s: {k: c.to_dict() for k, c in by_kind.items()}
                           for s, by_kind in self.cells.items()},
        }

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Report) and self.to_dict() == other.to_dict()


def weighted_average(means: Sequence[float], counts: Sequence[int]) -> float:
    """sum(count * mean) / sum(count)."""
    if len(means) != len(counts):
        raise InvalidParam("means and counts differ in length")
    total = sum(counts)
    if total <= 0:
        raise EmptyInput("weighted average over zero instances")
    return math.fsum(m * c for m, c in zip(means, counts)) / total


def _mean(xs: Sequence[float]) -> float:
    return math.fsum(xs) / len(xs)


def _std(xs: Sequence[float]) -> float:
    return statistics.pstdev(xs) if len(xs) > 1 else 0.0


def aggregate_report(records: Iterable[EvalRecord], error_policy: str = "count") -> Report:
    """Group records by (strategy, kind) and add an instance-weighted Avg row.

    Failed records count as misses under ``"count"`` and are left out of
    both numerator and denominator under ``"skip"``. When records carry
    several repeat indices the cell means pool all repeats and the std is
    taken over per-repeat means.
    """
    if error_policy not in ERROR_POLICIES:
        raise InvalidParam(f"error_policy must be one of {ERROR_POLICIES}")
    records = list(records)
    if not records:
        raise EmptyInput("no records to aggregate")
    groups: dict[str, dict[str, list[EvalRecord]]] = defaultdict(lambda: defaultdict(list))
    errors: dict[str, int] = defaultdict(int)
    for rec in records:
        if rec.error is not None:
            errors[rec.strategy] += 1
            if error_policy == "skip":
                continue
        groups[rec.strategy][rec.kind].append(rec)

    report = Report(error_policy=error_policy, errors={s: errors[s] for s in sorted(errors)})
    for strategy in sorted(groups):
        by_kind = groups[strategy]
        row: dict[str, Cell] = {}
        for kind in sorted(by_kind, key=lambda k: _KIND_ORDER.get(k, 99)):
            row[_abbrev(kind)] = _cell(by_kind[kind])
        counts = [c.count for c in row.values()]
        row[AVG] = Cell(
            sum(counts),
            weighted_average([c.em for c in row.values()], counts),
            weighted_average([c.es for c in row.values()], counts),
            *_avg_std(by_kind),
        )
        report.cells[strategy] = row
    return report


def _cell(recs: list[EvalRecord]) -> Cell:
    em = 100.0 * _mean([r.em for r in recs])
    es = _mean([r.es for r in recs])
    repeats = sorted({r.repeat for r in recs})
    if len(repeats) < 2:
        return Cell(len(recs), em, es)
    em_runs = [100.0 * _mean([r.em for r in recs if r.repeat == i]) for i in repeats]
    es_runs = [_mean([r.es for r in recs if r.repeat == i]) for i in repeats]
    return Cell(len(recs), em, es, _std(em_runs), _std(es_runs))


def _avg_std(by_kind: dict[str, list[EvalRecord]]) -> tuple[float | None, float | None]:
    recs = [r for rs in by_kind.values() for r in rs]
    repeats = sorted({r.repeat for r in recs})
    if len(repeats) < 2:
        return None, None
    em_runs = [100.0 * _mean([r.em for r in recs if r.repeat == i]) for i in repeats]
    es_runs = [_mean([r.es for r in recs if r.repeat == i]) for i in repeats]
    return _std(em_runs), _std(es_runs)


def run_benchmark(tasks: Sequence[CompletionTask], strategies: Sequence, pipeline, *,
                  repeat: int = 1, jobs: int = 1,
                  error_policy: str = "count") -> tuple[Report, list[EvalRecord]]:
    """Complete every (task, strategy) pair ``repeat`` times.

    Records come back ordered by (strategy position, task position, repeat)
    whatever ``jobs`` is, so a deterministic pipeline yields identical
    output across runs.
    """
    if not strategies:
        raise EmptyInput("no strategies to run")
    if not tasks:
        raise EmptyInput("no tasks to run")
    if repeat < 1 or jobs < 1:
        raise InvalidParam("repeat and jobs must be >= 1")
    work = [(s, t, r) for s in strategies for t in tasks for r in range(repeat)]

    def one(item) -> EvalRecord:
        strategy, task, rep = item
        rec = pipeline.complete_task(task, strategy)
        rec.repeat = rep
        return rec

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(one, work))
    else:
        records = [one(item) for item in work]
    return aggregate_report(records, error_policy), records


# --------------------------------------------------------------------------- emitters

CSV_COLUMNS = ("strategy", "kind", "count", "em", "es")


def report_csv(report: Report) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for strategy, kind, cell in report.rows():
        writer.writerow([strategy, kind, cell.count, f"{cell.em:.4f}", f"{cell.es:.4f}"])
    return buf.getvalue()


def plot_data(report: Report) -> dict:
    """Bar-chart series: one EM and one ES value per strategy for each row kind."""
    kinds = sorted({k for by_kind in report.cells.values() for k in by_kind},
                   key=lambda k: {"FB": 0, "RL": 1, AVG: 2}.get(k, 3))
    series = []
    for kind in kinds:
        for metric in ("em", "es"):
            series.append({
                "name": f"{metric.upper()} {kind}",
                "values": [getattr(report.cells[s][kind], metric) if kind in report.cells[s] else None
                           for s in report.strategies],
            })
    return {"categories": report.strategies, "series": series}


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_report(report: Report, out_dir: str | Path) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"csv": out / "report.csv", "json": out / "report.json", "plot": out / "plot-data.json"}
    paths["csv"].write_text(report_csv(report), encoding="utf-8")
    paths["json"].write_text(_dump_json(report.to_dict()), encoding="utf-8")
    paths["plot"].write_text(_dump_json(plot_data(report)), encoding="utf-8")
    return paths


def write_records(path: str | Path, records: Iterable[EvalRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_dict(), sort_keys=True, ensure_ascii=False) + "\n")


def read_records(path: str | Path) -> list[EvalRecord]:
    with open(path, encoding="utf-8") as fh:
        return [EvalRecord.from_dict(json.loads(line)) for line in fh if line.strip()]
