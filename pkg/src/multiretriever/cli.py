"""Command-line entry point: ingest -> index -> train -> run -> report.

Every command reads its inputs from and writes its artifacts to the output
directory, so a run is reproduced by the resolved config plus that
directory. Exit status: 0 success, 1 usage or configuration error, 2 any
failure while running.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from . import __version__
from .benchmark import aggregate_report, read_records, run_benchmark, write_records, write_report
from .config import RESOLVED_NAME, RunConfig, load_config, write_resolved
from .corpus import (
    CompletionTask, SourceFile, TaskKind, chunk_file, extract_tasks, ingest_repository, read_snippets,
    read_tasks, split_dataset, write_snippets, write_tasks,
)
from .embed import make_embedder, make_generator
from .errors import ConfigParseError, MultiRetrieverError
from .generate import Pipeline, Strategy, StrategyKind
from .index import persist_index, restore_index
from .retrievers import EmbeddingCache, PerspectiveId, build_perspective_index
from .selection import LinUcbState, LogisticModel, linucb_init, logistic_train, train_linucb

logger = logging.getLogger("multiretriever")

SNIPPETS = "snippets.jsonl"
TASKS = "tasks.jsonl"
VALIDATION_TASKS = "validation_tasks.jsonl"
SPLIT = "split.json"
SELECTOR = "selector.json"
LOGISTIC = "logistic.json"
RECORDS = "records.jsonl"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse would exit 2
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def index_filename(pid: PerspectiveId) -> str:
    return f"index-{pid.value.lower()}." + ("json" if pid is PerspectiveId.BM25 else "pdix")


# --------------------------------------------------------------------------- context

class Workspace:
    """Resolved config plus the output directory the commands share."""

    def __init__(self, cfg: RunConfig) -> None:
        if cfg.output_dir is None:
            raise UsageError("no output directory: pass --out or set output_dir in the config")
        self.cfg = cfg
        self.out = Path(cfg.output_dir)

    def path(self, name: str) -> Path:
        return self.out / name

    def require(self, name: str, made_by: str) -> Path:
        p = self.path(name)
        if not p.exists():
            raise MultiRetrieverError(f"{p} is missing; run `multiretriever {made_by}` first")
        return p

    def pipeline(self, *, need_selectors: bool = True) -> Pipeline:
        cfg = self.cfg
        indexes = {}
        for p in cfg.active_perspectives:
            indexes[p.id] = restore_index(self.require(index_filename(p.id), "index"))
        linucb = logistic = None
        if need_selectors and self.path(SELECTOR).exists():
            linucb = LinUcbState.load(self.path(SELECTOR))
        if need_selectors and self.path(LOGISTIC).exists():
            logistic = LogisticModel.load(self.path(LOGISTIC))
        return Pipeline(cfg.active_perspectives, indexes, make_embedder(cfg.backend.embed),
                        make_generator(cfg.backend.generate), cfg.prompt, cfg.retrieval,
                        linucb, logistic, record_timing=cfg.eval.record_timing)


def _apply_overrides(cfg: RunConfig, args: argparse.Namespace) -> RunConfig:
    if getattr(args, "out", None):
        cfg.output_dir = str(Path(args.out).resolve())
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "jobs", None) is not None:
        cfg.jobs = args.jobs
    if getattr(args, "strategy", None):
        names = [s.strip() for s in args.strategy.split(",") if s.strip()]
        for name in names:
            try:
                Strategy.parse(name)
            except MultiRetrieverError as exc:
                raise UsageError(str(exc)) from None
        cfg.selector = replace(cfg.selector, strategies=names)
    if getattr(args, "repeat", None) is not None:
        cfg.eval = replace(cfg.eval, repeat=args.repeat)
    return cfg


def _load(args: argparse.Namespace, *, required: bool = True) -> Workspace:
    if args.config:
        cfg = load_config(args.config)
    elif not required and args.out and (Path(args.out) / RESOLVED_NAME).exists():
        cfg = load_config(Path(args.out) / RESOLVED_NAME)
    else:
        raise UsageError("--config is required" + ("" if required else " (no resolved config under --out)"))
    ws = Workspace(_apply_overrides(cfg, args))
    write_resolved(ws.cfg, ws.out)
    return ws


# --------------------------------------------------------------------------- commands

def cmd_ingest(args: argparse.Namespace) -> int:
    ws = _load(args)
    cfg = ws.cfg
    files: list[SourceFile] = []
    for root in cfg.corpus.paths:
        files.extend(ingest_repository(root, cfg.corpus.globs))
    split = split_dataset(files, cfg.split.test_frac, cfg.split.val_frac, cfg.seed)
    snippets = [s for f in split.retrieval_files for s in chunk_file(f, cfg.chunking.window, cfg.chunking.stride)]
    task_kw = dict(random_lines=cfg.tasks.random_lines, seed=cfg.seed,
                   function_bodies=cfg.tasks.function_bodies, min_tokens=cfg.tasks.min_tokens)
    tests = extract_tasks(split.test_files, **task_kw)
    validation = extract_tasks(split.validation_files, **task_kw)
    write_snippets(ws.path(SNIPPETS), snippets)
    write_tasks(ws.path(TASKS), tests)
    write_tasks(ws.path(VALIDATION_TASKS), validation)
    ws.path(SPLIT).write_text(json.dumps(split.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"{len(files)} files -> {len(snippets)} snippets, {len(tests)} test tasks, "
          f"{len(validation)} validation tasks")
    return 0


def cmd_index(args: argparse.Namespace) -> int:
    ws = _load(args)
    cfg = ws.cfg
    snippets = read_snippets(ws.require(SNIPPETS, "ingest"))
    embedder = make_embedder(cfg.backend.embed)
    generator = make_generator(cfg.backend.generate)
    cache = EmbeddingCache(cfg.cache_dir) if cfg.cache_dir else None
    for p in cfg.active_perspectives:
        index = build_perspective_index(snippets, p, embedder, generator, cfg=cfg.retrieval,
                                        cache=cache, jobs=cfg.jobs)
        persist_index(index, ws.path(index_filename(p.id)))
        print(f"{p.tag}: {len(index)} entries -> {index_filename(p.id)}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    ws = _load(args)
    cfg = ws.cfg
    tasks = read_tasks(ws.require(VALIDATION_TASKS, "ingest"))
    if not tasks:
        raise MultiRetrieverError("the validation split produced no tasks")
    pipe = ws.pipeline(need_selectors=False)
    kinds = {s.kind for s in cfg.strategies}
    n_arms = len(pipe.arms)
    if StrategyKind.LINUCB in kinds:
        state = linucb_init(n_arms, alpha=cfg.selector.alpha, shared=cfg.selector.shared)
        state = train_linucb(state, tasks, pipe, cfg.selector.passes, cfg.seed,
                             full_information=cfg.selector.full_information)
        state.save(ws.path(SELECTOR))
        last = state.history[-1]
        print(f"LinUCB: {state.update_count} updates, last-pass selection accuracy "
              f"{last['selection_accuracy']:.3f} -> {SELECTOR}")
    if StrategyKind.LOGISTIC in kinds:
        samples = []
        for task in tasks:
            try:
                samples.append((pipe.arm_features(task), [pipe.arm_reward(task, a) for a in range(n_arms)]))
            except MultiRetrieverError as exc:
                logger.warning("skipping task %s for logistic training: %s", task.task_id, exc)
        model = logistic_train(samples, cfg.selector.logistic_lr, cfg.selector.logistic_epochs,
                               cfg.selector.logistic_l2)
        model.save(ws.path(LOGISTIC))
        print(f"logistic: {len(samples)} samples -> {LOGISTIC}")
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    ws = _load(args)
    cfg = ws.cfg
    tasks = read_tasks(ws.require(TASKS, "ingest"))
    pipe = ws.pipeline()
    report, records = run_benchmark(tasks, cfg.strategies, pipe, repeat=cfg.eval.repeat,
                                    jobs=cfg.jobs, error_policy=cfg.eval.error_policy)
    write_records(ws.path(RECORDS), records)
    write_report(report, ws.out)
    _print_report(report)
    return 0


def cmd_complete(args: argparse.Namespace) -> int:
    ws = _load(args, required=False)
    prefix = Path(args.prefix_file).read_text(encoding="utf-8")
    suffix = Path(args.suffix_file).read_text(encoding="utf-8") if args.suffix_file else ""
    try:
        strategy = Strategy.parse(args.strategy or "linucb")
    except MultiRetrieverError as exc:
        raise UsageError(str(exc)) from None
    kind = TaskKind.FUNCTION_BODY if args.kind == "body" else TaskKind.RANDOM_LINE
    task = CompletionTask("adhoc", kind, prefix, suffix, "", ("adhoc", Path(args.prefix_file).name), 1)
    pipe = ws.pipeline()
    _, context = pipe.choose(task, strategy)
    _, generation = pipe.generate_for(task, context)
    sys.stdout.write(generation + "\n")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    if args.config:
        ws = _load(args)
        out, policy = ws.out, ws.cfg.eval.error_policy
    elif args.out:
        out, policy = Path(args.out), args.error_policy
    else:
        raise UsageError("report needs --out or --config")
    records_path = Path(args.records) if args.records else out / RECORDS
    if not records_path.exists():
        raise MultiRetrieverError(f"{records_path} is missing; run `multiretriever run` first")
    report = aggregate_report(read_records(records_path), policy)
    paths = write_report(report, out)
    _print_report(report)
    print("wrote " + ", ".join(p.name for p in paths.values()))
    return 0


def _print_report(report) -> None:
    print(f"{'strategy':<10} {'kind':<4} {'count':>6} {'EM':>7} {'ES':>7}")
    for strategy, kind, cell in report.rows():
        print(f"{strategy:<10} {kind:<4} {cell.count:>6} {cell.em:>7.2f} {cell.es:>7.2f}")


# --------------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="multiretriever", description="Multi-perspective retrieval-augmented code completion.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p: argparse.ArgumentParser, config_required: bool = True) -> None:
        p.add_argument("--config", required=config_required, help="run configuration (JSON)")
        p.add_argument("--out", help="artifact directory (overrides output_dir)")
        p.add_argument("--seed", type=int, help="overrides the config seed")
        p.add_argument("--jobs", type=_positive, help="worker threads")

    for name, fn, text in (("ingest", cmd_ingest, "corpus -> snippets, tasks and split"),
                           ("index", cmd_index, "build one index per perspective"),
                           ("train", cmd_train, "fit LinUCB / logistic selectors on validation tasks"),
                           ("run", cmd_run, "benchmark strategies on the test tasks")):
        p = sub.add_parser(name, help=text)
        common(p)
        if name in ("train", "run"):
            p.add_argument("--strategy", help="comma-separated strategy names")
        if name == "run":
            p.add_argument("--repeat", type=_positive, help="repetitions per task")
        p.set_defaults(func=fn)

    p = sub.add_parser("complete", help="complete one prefix/suffix pair and print the result")
    common(p, config_required=False)
    p.add_argument("--prefix-file", required=True)
    p.add_argument("--suffix-file")
    p.add_argument("--strategy", help="strategy name (default linucb)")
    p.add_argument("--kind", choices=("line", "body"), default="line")
    p.set_defaults(func=cmd_complete)

    p = sub.add_parser("report", help="records -> report.csv / report.json / plot-data.json")
    p.add_argument("--config")
    p.add_argument("--out")
    p.add_argument("--records", help="records file (default <out>/records.jsonl)")
    p.add_argument("--error-policy", choices=("count", "skip"), default="count")
    p.set_defaults(func=cmd_report, seed=None, jobs=None)
    return parser


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigParseError) as exc:
        print(f"multiretriever: error: {exc}", file=sys.stderr)
        return 1
    except (MultiRetrieverError, OSError, ValueError) as exc:
        print(f"multiretriever: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
