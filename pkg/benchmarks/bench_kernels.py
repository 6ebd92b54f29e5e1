#!/usr/bin/env python3
"""Benchmark the compiled kernels against the NumPy fallback.

Runs the two hot kernels on workloads shaped like the real pipeline's
(similarity matrices over sparse rating profiles; multi-pass preference
fitting) and reports best-of-N wall times, the speedup, and the numeric
agreement between backends.

Usage: python3 benchmarks/bench_kernels.py [--rows N] [--cols N] [--repeats N]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from fogcache.kernels import numpy_backend

try:
    from fogcache.kernels import _ckernels
except ImportError:
    _ckernels = None


def make_profile_csr(rows: int, cols: int, density: float, seed: int):
    """CSR rating profiles: each row rates ~density*cols random columns 1-5."""
    rng = np.random.default_rng(seed)
    indptr = [0]
    indices: list[int] = []
    data: list[float] = []
    for _ in range(rows):
        k = max(1, rng.binomial(cols, density))
        picked = np.sort(rng.choice(cols, size=k, replace=False))
        indices.extend(picked.tolist())
        data.extend(rng.integers(1, 6, size=k).astype(float).tolist())
        indptr.append(len(indices))
    col_weights = np.log1p(rng.random(cols) * 9.0) + 0.05
    return (np.asarray(indptr, dtype=np.int64), np.asarray(indices, dtype=np.int64),
            np.asarray(data), col_weights)


def make_ftrl_workload(samples: int, dim: int, passes: int, seed: int):
    rng = np.random.default_rng(seed)
    X = (rng.random((samples, dim)) < 0.3).astype(np.float64)
    y = (rng.random(samples) < 0.5).astype(np.float64)
    orders = [rng.permutation(samples).astype(np.int64) for _ in range(passes)]
    return X, y, orders


def best_of(fn, repeats: int) -> float:
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=600, help="profile rows (users)")
    ap.add_argument("--cols", type=int, default=1000, help="profile columns (contents)")
    ap.add_argument("--density", type=float, default=0.04, help="profile fill fraction")
    ap.add_argument("--samples", type=int, default=4000, help="preference samples")
    ap.add_argument("--dim", type=int, default=18, help="preference feature dim")
    ap.add_argument("--passes", type=int, default=10, help="preference passes")
    ap.add_argument("--repeats", type=int, default=5, help="best-of repeats")
    args = ap.parse_args()

    indptr, indices, data, weights = make_profile_csr(
        args.rows, args.cols, args.density, seed=1)
    X, y, orders = make_ftrl_workload(args.samples, args.dim, args.passes, seed=2)

    def sim_with(impl):
        return impl.pair_similarity(indptr, indices, data, weights)

    def ftrl_with(impl):
        z = np.zeros(args.dim)
        n = np.zeros(args.dim)
        for order in orders:
            impl.ftrl_fit(z, n, X, y, order, 0.1, 1.0, 1e-3, 1e-3)
        return z

    cases = [
        ("pair_similarity "
         f"({args.rows}x{args.cols}, {args.density:.0%} filled)", sim_with),
        ("ftrl_fit "
         f"({args.samples} samples x {args.passes} passes, dim {args.dim})", ftrl_with),
    ]

    print(f"{'kernel':<48} {'numpy':>10} {'compiled':>10} {'speedup':>8}")
    for label, run in cases:
        t_py = best_of(lambda: run(numpy_backend), args.repeats)
        if _ckernels is None:
            print(f"{label:<48} {t_py * 1e3:9.2f}ms {'—':>10} {'—':>8}")
            continue
        t_c = best_of(lambda: run(_ckernels), args.repeats)
        diff = float(np.max(np.abs(run(numpy_backend) - run(_ckernels))))
        print(f"{label:<48} {t_py * 1e3:9.2f}ms {t_c * 1e3:9.2f}ms "
              f"{t_py / t_c:7.1f}x   (max |Δ| {diff:.1e})")
    if _ckernels is None:
        print("\ncompiled extension not built — fallback timings only")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
