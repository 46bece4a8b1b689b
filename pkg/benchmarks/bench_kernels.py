#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-Python fallbacks.

Covers the two hot loops: LCS length (the dedup filter's inner call) and
BM25 postings accumulation (the retrieval scorer). Run after building the
extension:

    python benchmarks/bench_kernels.py
"""

from __future__ import annotations

import random
import time

import numpy as np

from specforge import _kernels
from specforge._kernels import pure


def time_fn(fn, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def bench_lcs(rng: random.Random):
    pairs = [
        (
            np.array([rng.randrange(50) for _ in range(120)], dtype=np.int32),
            np.array([rng.randrange(50) for _ in range(120)], dtype=np.int32),
        )
        for _ in range(300)
    ]
    list_pairs = [(a.tolist(), b.tolist()) for a, b in pairs]

    def run_pure():
        for a, b in list_pairs:
            pure.lcs_length(a, b)

    t_pure = time_fn(run_pure)
    if _kernels.HAVE_SPEEDUPS:
        def run_compiled():
            for a, b in pairs:
                _kernels._ext.lcs_length(a, b)
        t_comp = time_fn(run_compiled)
    else:
        t_comp = None
    return t_pure, t_comp


def bench_bm25(rng: random.Random):
    n_docs = 200_000
    doc_len = np.array([float(rng.randrange(20, 300)) for _ in range(n_docs)])
    avgdl = float(doc_len.mean())
    terms = []
    for _ in range(40):
        df = rng.randrange(1000, 50_000)
        idx = np.array(sorted(rng.sample(range(n_docs), df)), dtype=np.int32)
        tfs = np.array([rng.randrange(1, 6) for _ in range(df)], dtype=np.int32)
        terms.append((idx, tfs, rng.random() * 4))

    def run_pure():
        scores = np.zeros(n_docs)
        for idx, tfs, idf in terms:
            pure.bm25_accumulate(scores, idx, tfs, idf, 1.2, 0.75, doc_len, avgdl)

    t_pure = time_fn(run_pure)
    if _kernels.HAVE_SPEEDUPS:
        def run_compiled():
            scores = np.zeros(n_docs)
            for idx, tfs, idf in terms:
                _kernels._ext.bm25_accumulate(scores, idx, tfs, idf, 1.2, 0.75, doc_len, avgdl)
        t_comp = time_fn(run_compiled)
    else:
        t_comp = None
    return t_pure, t_comp


def report(name: str, t_pure: float, t_comp: float | None):
    if t_comp is None:
        print(f"{name:<28}{t_pure * 1e3:>10.1f} ms   (extension not built)")
    else:
        print(f"{name:<28}{t_pure * 1e3:>10.1f} ms {t_comp * 1e3:>10.1f} ms {t_pure / t_comp:>8.1f}x")


def main():
    print(f"kernel backend available: {_kernels.backend_name()}")
    print(f"{'benchmark':<28}{'pure':>13}{'compiled':>13}{'speedup':>9}")
    rng = random.Random(1)
    report("lcs 300x(120x120)", *bench_lcs(rng))
    rng = random.Random(2)
    report("bm25 40 terms/200k docs", *bench_bm25(rng))


if __name__ == "__main__":
    main()
