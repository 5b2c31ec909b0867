#!/usr/bin/env python3
"""Benchmark the all-pairs max-similarity kernel across worker counts.

Pins BLAS to one thread (when threadpoolctl is available) so the worker-pool
scaling is measured in isolation.
"""

from __future__ import annotations

import argparse
import os
import time

import numpy as np

from taskrank.similarity import all_pairs_max_similarity
from taskrank.tensor_io import PromptMatrix

try:
    from threadpoolctl import threadpool_limits
except ImportError:
    threadpool_limits = None


def bench(sources, targets, workers: int, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        all_pairs_max_similarity(sources, targets, workers=workers)
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sources", type=int, default=13)
    parser.add_argument("--targets", type=int, default=10)
    parser.add_argument("--rows", type=int, default=100)
    parser.add_argument("--cols", type=int, default=768)
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--workers", default="1,2,4,8")
    args = parser.parse_args()

    rng = np.random.default_rng(0xBE7C)

    def mk(tid):
        data = rng.standard_normal((args.rows, args.cols))
        return PromptMatrix(tid, 42, 30000, args.rows, args.cols, data)

    import warnings

    from taskrank.tensor_io import PromptShapeWarning

    warnings.simplefilter("ignore", PromptShapeWarning)
    sources = {f"s{i:02d}": mk(f"s{i:02d}") for i in range(args.sources)}
    targets = {f"t{j:02d}": mk(f"t{j:02d}") for j in range(args.targets)}

    print(
        f"{args.sources}x{args.targets} pairs at {args.rows}x{args.cols}, "
        f"best of {args.repeats}, {os.cpu_count()} CPUs"
    )
    limiter = threadpool_limits(1) if threadpool_limits is not None else None
    try:
        base = None
        for w in (int(w) for w in args.workers.split(",")):
            t = bench(sources, targets, w, args.repeats)
            base = base or t
            print(f"  workers={w:<3d} {t * 1000:8.1f} ms   speedup {base / t:4.2f}x")
    finally:
        if limiter is not None:
            limiter.unregister()


if __name__ == "__main__":
    main()
