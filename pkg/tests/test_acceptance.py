"""Acceptance criteria 1-9.

Each criterion records one PASS/FAIL line in ``RESULTS``; the terminal
summary hook in conftest prints them at the end of the session.
"""
from __future__ import annotations

import json
import random
import statistics
import time
import warnings
from functools import lru_cache

import numpy as np
import pytest

from multiretriever.benchmark import weighted_average
from multiretriever.cli import main
from multiretriever.corpus import SourceFile, TaskKind, extract_tasks, is_candidate_line, split_dataset
from multiretriever.generate import PromptConfig, assemble_augmented_prompt, assemble_fim_prompt
from multiretriever.index import (
    DenseIndex, bm25_build_index, bm25_query, dense_topk, jaccard_similarity, persist_index, restore_index,
    tokenize_code,
)
from multiretriever.metrics import edit_similarity, exact_match, levenshtein_distance
from multiretriever.retrievers import Perspective, PerspectiveId, build_prompt
from multiretriever.selection import linucb_init, linucb_update
from multiretriever.synthetic import run_bandit, venn_em
from multiretriever.vectors import EmbeddingVector

from .conftest import demo_java, make_snippet, write_demo_repo

RESULTS: dict[int, str] = {}


def record(criterion: int, ok: bool, detail: str) -> None:
    RESULTS[criterion] = f"criterion {criterion}: {'PASS' if ok else 'FAIL'} ({detail})"
    print(RESULTS[criterion])


# ---------------------------------------------------------------- 1. aggregation regression

FB_COUNT, RL_COUNT = 2053, 1264
COLUMNS = ("base", "bm25", "repocoder", "reacc", "lexical", "summary", "hypoline", "adaptive")
# (model, metric) -> FB row, RL row, printed Avg row
REFERENCE_ROWS = {
    ("codellama", "EM"): ((34.97, 36.34, 37.35, 37.12, 37.21, 38.97, 37.90, 41.16),
                          (68.91, 71.44, 71.37, 71.20, 71.91, 71.60, 73.89, 76.58),
                          (47.90, 49.71, 50.31, 50.11, 50.44, 51.40, 51.61, 54.66)),
    ("codellama", "ES"): ((64.49, 64.85, 65.77, 65.53, 65.21, 66.33, 64.85, 67.22),
                          (87.15, 88.41, 87.82, 87.81, 87.82, 87.80, 88.88, 89.86),
                          (73.12, 73.83, 74.17, 74.02, 73.83, 74.55, 74.01, 75.85)),
    ("starcoder", "EM"): ((30.83, 30.05, 30.63, 30.59, 31.55, 32.23, 31.49, 33.85),
                          (68.04, 72.15, 71.26, 71.20, 71.47, 71.72, 72.23, 73.97),
                          (45.01, 46.10, 46.11, 46.07, 46.76, 47.28, 47.01, 49.14)),
    ("starcoder", "ES"): ((60.56, 59.39, 59.78, 59.67, 59.90, 61.23, 61.10, 62.93),
                          (86.99, 88.53, 88.23, 88.20, 87.37, 87.12, 87.27, 88.53),
                          (70.63, 70.50, 70.62, 70.54, 70.37, 71.10, 71.07, 72.69)),
}
# This Avg cell does not follow from its own FB/RL cells (their weighted mean
# is 74.51), so the criterion is expected to report FAIL here.
KNOWN_DEFECTS = {("codellama", "ES", "summary")}
AVG_TOL = 0.01


def _cells():
    for (model, metric), (fb, rl, avg) in REFERENCE_ROWS.items():
        for col, f, r, a in zip(COLUMNS, fb, rl, avg):
            yield model, metric, col, f, r, a


def _avg_ok(f: float, r: float, a: float) -> bool:
    return abs(weighted_average([f, r], [FB_COUNT, RL_COUNT]) - a) <= AVG_TOL + 1e-9


def test_criterion_1_summary():
    start = time.perf_counter()
    bad = [f"{m}/{k}/{c}" for m, k, c, f, r, a in _cells() if not _avg_ok(f, r, a)]
    elapsed = time.perf_counter() - start
    total = sum(1 for _ in _cells())
    record(1, not bad and elapsed < 1.0,
           f"{total - len(bad)}/{total} Avg cells within {AVG_TOL}; mismatched: {', '.join(bad) or 'none'}")
    assert elapsed < 1.0
    assert set(tuple(b.split("/")) for b in bad) == KNOWN_DEFECTS


@pytest.mark.parametrize("model, metric, col, fb, rl, avg", [
    pytest.param(*cell, id="-".join(cell[:3]),
                 marks=[pytest.mark.xfail(strict=True, reason="printed Avg disagrees with its FB/RL cells")]
                 if cell[:3] in KNOWN_DEFECTS else [])
    for cell in _cells()
])
def test_criterion_1_avg_cell(model, metric, col, fb, rl, avg):
    assert weighted_average([fb, rl], [FB_COUNT, RL_COUNT]) == pytest.approx(avg, abs=AVG_TOL + 1e-9)


# ---------------------------------------------------------------- 2. ridge equivalence

def test_criterion_2_linucb_matches_ridge_solve():
    start = time.perf_counter()
    rng = np.random.default_rng(2)
    n_arms, d, n = 3, 2, 1000
    state = linucb_init(n_arms, d, alpha=0.0)
    X = rng.uniform(0.0, 1.0, (n_arms, n, d))
    R = rng.integers(0, 2, (n_arms, n)).astype(float)
    for i in range(n):
        for arm in range(n_arms):
            linucb_update(state, arm, X[arm, i], R[arm, i])
    worst = 0.0
    for arm in range(n_arms):
        direct = np.linalg.solve(np.eye(d) + X[arm].T @ X[arm], X[arm].T @ R[arm])
        worst = max(worst, float(np.max(np.abs(state.theta(arm) - direct))))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-9 and elapsed < 5.0
    record(2, ok, f"max |theta - ridge| = {worst:.2e} over {n} updates per arm, {elapsed:.2f}s")
    assert ok


# ---------------------------------------------------------------- 3. bandit convergence

def test_criterion_3_linucb_converges():
    start = time.perf_counter()
    seeds = range(20)
    accuracy = statistics.median(run_bandit(500, s).accuracy_last(50) for s in seeds)
    ratios = []
    for s in seeds:
        run = run_bandit(1000, s)
        ratios.append(run.regret(1000) / max(1, run.regret(500)))
    ratio = statistics.median(ratios)
    elapsed = time.perf_counter() - start
    ok = accuracy >= 0.90 and ratio < 1.8 and elapsed < 30.0
    record(3, ok, f"median final-50 accuracy {accuracy:.3f}, median regret(1000)/regret(500) {ratio:.3f}, "
                  f"{elapsed:.1f}s")
    assert ok


# ---------------------------------------------------------------- 4. multi-perspective benefit

def test_criterion_4_venn_benchmark():
    start = time.perf_counter()
    runs = [venn_em(seed) for seed in range(20)]
    med = {name: statistics.median(r[name] for r in runs) for name in runs[0]}
    elapsed = time.perf_counter() - start
    singles = {n: med[n] for n in ("lexical", "hypoline", "summary")}
    ok = (all(abs(v - 100 / 3) <= 5.0 for v in singles.values())
          and med["linucb"] > max(singles.values())
          and med["linucb"] >= med["union"]
          and elapsed < 60.0)
    detail = ", ".join(f"{n} {v:.1f}" for n, v in med.items())
    record(4, ok, f"median EM: {detail}; {elapsed:.1f}s")
    assert ok


# ---------------------------------------------------------------- 5. metric oracles

def _oracle_distance(a: str, b: str) -> int:
    @lru_cache(maxsize=None)
    def d(i: int, j: int) -> int:
        if i == 0:
            return j
        if j == 0:
            return i
        return min(d(i - 1, j) + 1, d(i, j - 1) + 1, d(i - 1, j - 1) + (a[i - 1] != b[j - 1]))
    return d(len(a), len(b))


def test_criterion_5_metric_oracles():
    start = time.perf_counter()
    rng = random.Random(5)
    alphabet = "abcx y;"
    mismatches = 0
    for _ in range(10_000):
        a = "".join(rng.choices(alphabet, k=rng.randint(0, 12)))
        b = "".join(rng.choices(alphabet, k=rng.randint(0, 12)))
        mismatches += levenshtein_distance(a, b) != _oracle_distance(a, b)
    fixtures = [
        edit_similarity("return x", "return y") == 87.5,
        edit_similarity("same", "same") == 100.0,
        edit_similarity("", "abc") == 0.0,
        exact_match("  x = 1 ", "x = 1") == 1,
        exact_match("\tx\n", "x") == 1,
        exact_match("x=1", "x = 1") == 0,
        exact_match("x = 1", "x  = 1") == 0,
    ]
    elapsed = time.perf_counter() - start
    ok = mismatches == 0 and all(fixtures) and elapsed < 10.0
    record(5, ok, f"{mismatches} Levenshtein mismatches in 10000 pairs, "
                  f"{sum(fixtures)}/{len(fixtures)} ES/EM fixtures, {elapsed:.1f}s")
    assert ok


# ---------------------------------------------------------------- 6. retrieval oracles

def test_criterion_6_retrieval_oracles():
    start = time.perf_counter()
    rng = np.random.default_rng(6)
    rows = rng.standard_normal((100, 64)).astype(np.float32)
    idx = DenseIndex(64)
    for i, row in enumerate(rows):
        idx.add(f"s{i:03d}", row)
    q = rng.standard_normal(64)
    wide = rows.astype(np.float64)
    naive = sorted(((f"s{i:03d}", float(r @ q / (np.linalg.norm(r) * np.linalg.norm(q))))
                    for i, r in enumerate(wide)), key=lambda p: (-p[1], p[0]))
    dense_bad = 0
    for k in range(1, 101):
        got = dense_topk(idx, EmbeddingVector(q), k)
        want = naive[:k]
        same_ids = [i for i, _ in got] == [i for i, _ in want]
        close = np.allclose([s for _, s in got], [s for _, s in want], rtol=0, atol=1e-9)
        dense_bad += not (same_ids and close)

    docs = [make_snippet("a b", "d1.java"), make_snippet("b c", "d2.java")]
    [(sid, score)] = bm25_query(bm25_build_index(docs), "c", 1)
    bm25_ok = sid == docs[1].snippet_id and abs(score - np.log(2)) <= 1e-6

    jaccard_ok = (jaccard_similarity(tokenize_code("foo bar baz"), tokenize_code("bar baz qux")) == 0.5
                  and jaccard_similarity(["a"], ["a"]) == 1.0
                  and jaccard_similarity(["a"], []) == 0.0
                  and jaccard_similarity([], []) == 1.0)
    elapsed = time.perf_counter() - start
    ok = dense_bad == 0 and bm25_ok and jaccard_ok and elapsed < 5.0
    record(6, ok, f"dense_topk mismatched for {dense_bad}/100 k values, BM25 d2 = {score:.7f}, "
                  f"Jaccard {'exact' if jaccard_ok else 'wrong'}, {elapsed:.2f}s")
    assert ok


# ---------------------------------------------------------------- 7. prompt bit-exactness

def test_criterion_7_prompt_bit_exactness():
    cfg = PromptConfig()
    literal = "<PRE> [Prefix] <SUF> [Suffix] <MID>"
    checks = [
        assemble_fim_prompt(cfg, "[Prefix]", "[Suffix]") == literal,
        build_prompt(Perspective(PerspectiveId.HYPO_LINE), prefix="[Prefix]", suffix="[Suffix]") == literal,
        assemble_fim_prompt(cfg, "int a = 1;\n", "\nreturn a;") == "<PRE> int a = 1;\n <SUF> \nreturn a; <MID>",
    ]
    rng = random.Random(7)
    pieces = ["x", "\n", " ", "{", "}", "//", "<PRE>", "é"]
    degrade_bad = 0
    for _ in range(500):
        prefix = "".join(rng.choices(pieces, k=rng.randint(0, 30)))
        suffix = "".join(rng.choices(pieces, k=rng.randint(0, 30)))
        plain = assemble_fim_prompt(cfg, prefix, suffix).encode()
        degrade_bad += assemble_augmented_prompt(cfg, [], prefix, suffix).encode() != plain
    ok = all(checks) and degrade_bad == 0
    record(7, ok, f"{sum(checks)}/{len(checks)} FIM fixtures, {degrade_bad}/500 empty-retrieval prompts differ")
    assert ok


# ---------------------------------------------------------------- 8. round trip and determinism

def _snapshot(out) -> dict[str, bytes]:
    return {p.name: p.read_bytes() for p in sorted(out.iterdir()) if p.is_file()}


def test_criterion_8_round_trip_and_determinism(tmp_path):
    docs = [make_snippet(f"int v{i} = {i};\n", f"f{i}.java") for i in range(5)]
    dense = DenseIndex(8)
    rng = np.random.default_rng(8)
    for d in docs:
        dense.add(d.snippet_id, rng.standard_normal(8), d)
    sparse = bm25_build_index(docs)
    persist_index(dense, tmp_path / "d.pdix")
    persist_index(sparse, tmp_path / "s.json")
    lossless = restore_index(tmp_path / "d.pdix") == dense and restore_index(tmp_path / "s.json") == sparse

    write_demo_repo(tmp_path / "repo")
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({
        "corpus": {"paths": ["repo"], "globs": ["*.java"]},
        "backend": {"kind": "Local", "dim": 64},
        "seed": 3,
        "output_dir": "out",
    }))
    with warnings.catch_warnings():
        # the tiny corpus trips degenerate-data warnings in selector training
        warnings.simplefilter("ignore")
        codes = [main([cmd, "--config", str(cfg)]) for cmd in ("ingest", "index", "train", "run")]
        first = _snapshot(tmp_path / "out")
        codes += [main([cmd, "--config", str(cfg)]) for cmd in ("ingest", "index", "train", "run")]
        second = _snapshot(tmp_path / "out")
    changed = sorted(n for n in first if first[n] != second.get(n)) + sorted(set(second) - set(first))
    ok = lossless and codes == [0] * 8 and not changed and "records.jsonl" in first
    record(8, ok, f"persist/restore {'lossless' if lossless else 'lossy'}, {len(first)} run artifacts, "
                  f"changed between runs: {', '.join(changed) or 'none'}")
    assert ok


# ---------------------------------------------------------------- 9. corpus protocol

def test_criterion_9_corpus_protocol():
    files = [SourceFile.from_text("demo", f"Service{i:02d}.java", demo_java(i)) for i in range(20)]
    split = split_dataset(files, 0.10, 0.10, seed=0)
    sizes = (len(split.test_files), len(split.validation_files), len(split.retrieval_files))
    by_ref = {f.ref: f for f in files}
    tasks = extract_tasks(files, random_lines=3, seed=0)
    broken = [t.task_id for t in tasks
              if t.prefix + t.ground_truth + t.suffix != by_ref[tuple(t.source_file)].text]
    per_file = []
    for f in split.test_files:
        eligible = sum(is_candidate_line(line) for line in f.text.split("\n")) >= 3
        n_rl = sum(1 for t in extract_tasks([f], 3, 0)
                   if t.kind is TaskKind.RANDOM_LINE)
        per_file.append(n_rl == 3 or not eligible)
    ok = sizes == (2, 2, 16) and not broken and all(per_file) and tasks
    record(9, bool(ok), f"split {sizes[0]}/{sizes[1]}/{sizes[2]}, {len(tasks)} tasks, "
                        f"{len(broken)} break reconstruction, "
                        f"{sum(per_file)}/{len(per_file)} test files with 3 random-line tasks")
    assert ok
