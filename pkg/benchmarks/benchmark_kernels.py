#!/usr/bin/env python3
"""Time the sampling kernels under the numpy and numba backends.

The shapes mirror the bundled reference configuration at N = 10: one
collective series of 7400 runs, 90 ordered pair slots with 82
repetitions, a 100-cell split series with 60 repetitions, and the
randomized variants with 7400 / 2775 sampled slots.  With ``--trials T``
the script also times complete estimator trials per scheme through the
Monte-Carlo path.

Run from the repository root:

    python3 benchmarks/benchmark_kernels.py
    python3 benchmarks/benchmark_kernels.py --loops 200 --trials 500
"""

import argparse
import os
import time

import numpy as np

from spinsq._kernels import (
    HAS_NUMBA,
    pairs_reduce,
    rand_pairs_reduce,
    rand_split_reduce,
    split_reduce,
    total_spin_reduce,
)


def _sorted_rows(rng, rows, cols):
    return np.ascontiguousarray(np.sort(rng.random((rows, cols)), axis=1))


def _cases(rng):
    """(label, shape note, zero-argument callable) per kernel."""
    n = 10
    m = n * (n - 1)
    ts_u = rng.random(7400)
    ts_cuts = np.sort(rng.random(n))
    ap_u = rng.random(m * 82)
    pair_cuts = _sorted_rows(rng, m, 3)
    sp_u = rng.random(n * n * 60)
    sp_first = rng.random(n * n)
    sp_second = rng.random(n * n)
    rp_idx = rng.random(7400)
    rp_u = rng.random(7400)
    rs_idx = rng.random(2775)
    rs_u = rng.random(2775 * 2)
    plus = rng.random(n)
    return [
        ("total_spin_reduce", "K=7400",
         lambda: total_spin_reduce(ts_u, ts_cuts, n)),
        ("pairs_reduce", "90x82",
         lambda: pairs_reduce(ap_u, pair_cuts, 82)),
        ("split_reduce", "100x60",
         lambda: split_reduce(sp_u, sp_first, sp_second, 60)),
        ("rand_pairs_reduce", "L=7400 K=1",
         lambda: rand_pairs_reduce(rp_idx, rp_u, pair_cuts, 1)),
        ("rand_split_reduce", "L=2775 K=2",
         lambda: rand_split_reduce(rs_idx, rs_u, plus, 2)),
    ]


def _best_ms(fn, loops, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        for _ in range(loops):
            fn()
        best = min(best, (time.perf_counter() - start) / loops)
    return best * 1e3


def _bench_kernels(backends, loops, repeats):
    rng = np.random.default_rng(0)
    cases = _cases(rng)
    results = {}
    for backend in backends:
        os.environ["SPINSQ_BACKEND"] = backend
        for label, note, fn in cases:
            fn()  # warm-up (includes numba compilation)
            results[backend, label] = _best_ms(fn, loops, repeats)
    width = max(len(f"{label} [{note}]") for label, note, _ in cases)
    header = f"{'kernel':<{width}}" + "".join(f"  {b:>10}" for b in backends)
    print(header + ("     speedup" if len(backends) == 2 else ""))
    for label, note, _ in cases:
        row = f"{f'{label} [{note}]':<{width}}"
        for backend in backends:
            row += f"  {results[backend, label]:>8.3f}ms"
        if len(backends) == 2:
            a, b = (results[backend, label] for backend in backends)
            row += f"  {a / b:>9.1f}x"
        print(row)


def _bench_trials(backends, trials):
    from spinsq.montecarlo import run_trials
    from spinsq.states import DickeState

    budgets = {
        "ts": dict(k=7400),
        "ap1": dict(k=82),
        "ap2": dict(k=60),
        "rp1": dict(l=7400, k=1),
        "rp2": dict(l=2775, k=2),
    }
    state = DickeState(10, 5)
    print(f"\nend-to-end trials (T={trials}, single thread, ms/trial)")
    for scheme, budget in budgets.items():
        row = f"{scheme:<4}"
        for backend in backends:
            os.environ["SPINSQ_BACKEND"] = backend
            run_trials(state, scheme, "c", trials=2, threads=1, **budget)
            start = time.perf_counter()
            run_trials(state, scheme, "c", trials=trials, threads=1, **budget)
            per = (time.perf_counter() - start) / trials * 1e3
            row += f"  {backend} {per:>7.3f}"
        print(row)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--loops", type=int, default=100,
                        help="kernel calls per timing sample (default 100)")
    parser.add_argument("--repeats", type=int, default=5,
                        help="timing samples, best is kept (default 5)")
    parser.add_argument("--trials", type=int, default=0,
                        help="also time T full estimator trials per scheme")
    args = parser.parse_args(argv)

    backends = ["numpy"] + (["numba"] if HAS_NUMBA else [])
    if not HAS_NUMBA:
        print("numba not importable; timing the numpy backend only")
    _bench_kernels(backends, args.loops, args.repeats)
    if args.trials:
        _bench_trials(backends, args.trials)


if __name__ == "__main__":
    main()
