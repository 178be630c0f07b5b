"""Benchmark the numba kernels against the pure-numpy fallback.

Usage:
    python3 benchmarks/bench_backends.py [--repeats 5] [--json]

Times the three hot kernels at pipeline-realistic sizes and prints a
table (or JSON). Numba timings exclude the first, compile-bearing call.
"""

import argparse
import json
import time

import numpy as np

from frametok import _kernels_np

CASES = {
    "pairwise_spatial (256 patches, d=1408)": (
        "pairwise_mean_sqdist",
        lambda rng: (rng.standard_normal((256, 1, 1408)).astype(np.float32),),
    ),
    "pairwise_temporal (100 frames, 16x1408)": (
        "pairwise_mean_sqdist",
        lambda rng: (rng.standard_normal((100, 16, 1408)).astype(np.float32),),
    ),
    "topk_rows (50000 x 25, K=20)": (
        "topk_rows",
        lambda rng: (rng.standard_normal((50000, 25)), 20),
    ),
    "matmul (scorer layer, 25x2816 @ 2816x704)": (
        "matmul",
        lambda rng: (rng.standard_normal((25, 2816)).astype(np.float32),
                     rng.standard_normal((2816, 704)).astype(np.float32)),
    ),
}


def time_call(fn, args, repeats):
    fn(*args)  # warm (and JIT-compile on the numba path)
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--json", action="store_true")
    args = parser.parse_args()

    backends = {"numpy": _kernels_np}
    try:
        from frametok import _kernels_nb
        backends["numba"] = _kernels_nb
    except ImportError:
        print("numba unavailable; timing the numpy fallback only")

    rows = []
    for label, (fn_name, make_args) in CASES.items():
        call_args = make_args(np.random.default_rng(0))
        row = {"case": label}
        for name, impl in backends.items():
            row[name] = time_call(getattr(impl, fn_name), call_args, args.repeats)
        if len(backends) == 2:
            row["speedup"] = row["numpy"] / row["numba"]
        rows.append(row)

    if args.json:
        print(json.dumps(rows, indent=2))
        return
    width = max(len(r["case"]) for r in rows)
    header = f"{'case':<{width}}  " + "".join(f"{b:>12}" for b in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for row in rows:
        line = f"{row['case']:<{width}}  " + "".join(
            f"{row[b] * 1e3:>10.2f}ms" for b in backends
        )
        if "speedup" in row:
            line += f"{row['speedup']:>9.1f}x"
        print(line)


if __name__ == "__main__":
    main()
