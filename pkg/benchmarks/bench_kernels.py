"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Both implementations are checked for equal results before timing.
"""

from __future__ import annotations

import argparse
import random
import string
import timeit

import numpy as np

from multiretriever.kernels import IMPLEMENTATIONS


def _pairs(n: int, length: int, seed: int) -> list[tuple[str, str]]:
    rng = random.Random(seed)
    alphabet = string.ascii_letters + " ;(){}="

    def word() -> str:
        return "".join(rng.choice(alphabet) for _ in range(rng.randint(length // 2, length)))

    return [(word(), word()) for _ in range(n)]


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    pairs = _pairs(300, 80, 0)
    rng = np.random.default_rng(0)
    rows = rng.standard_normal((20_000, 256)).astype(np.float32)
    query = rng.standard_normal(256)

    results = {}
    for name, impl in IMPLEMENTATIONS.items():
        lev = [impl.levenshtein(a, b) for a, b in pairs]
        cos = impl.cosine_scores(rows, query)
        results[name] = (lev, cos)
    names = list(results)
    for other in names[1:]:
        assert results[other][0] == results[names[0]][0], "levenshtein results differ"
        assert np.allclose(results[other][1], results[names[0]][1], atol=1e-9), "cosine results differ"

    print(f"{'kernel':<12} {'impl':<8} {'best of ' + str(args.repeat):>12}")
    timings: dict[str, dict[str, float]] = {}
    for name, impl in IMPLEMENTATIONS.items():
        lev_t = min(timeit.repeat(lambda: [impl.levenshtein(a, b) for a, b in pairs],
                                  number=1, repeat=args.repeat))
        cos_t = min(timeit.repeat(lambda: impl.cosine_scores(rows, query), number=1, repeat=args.repeat))
        timings[name] = {"levenshtein": lev_t, "cosine_scores": cos_t}
        print(f"{'levenshtein':<12} {name:<8} {lev_t * 1e3:>10.2f}ms")
        print(f"{'cosine':<12} {name:<8} {cos_t * 1e3:>10.2f}ms")
    if "cython" in timings:
        for kernel in ("levenshtein", "cosine_scores"):
            speedup = timings["python"][kernel] / timings["cython"][kernel]
            print(f"{kernel}: compiled is {speedup:.1f}x the fallback")
    else:
        print("compiled extension not built; only the fallback was timed")


if __name__ == "__main__":
    main()
