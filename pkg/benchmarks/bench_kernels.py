"""Benchmark the halfspace-projection kernel: compiled vs pure-numpy backend.

The backend is chosen at import time from TILE360_DISABLE_NUMBA, so this
script re-runs itself in a subprocess with the flag set to time the fallback.

Usage: python3 benchmarks/bench_kernels.py [--sizes 30,100,300] [--repeats 5]
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def make_problem(n_vars: int, n_rows: int, seed: int):
    """Random feasible projection problem in CSR form (plus box rows)."""
    rng = np.random.default_rng(seed)
    dense = rng.normal(size=(n_rows, n_vars)) * (rng.random((n_rows, n_vars)) < 0.3)
    interior = rng.random(n_vars)
    b = dense @ interior + rng.uniform(0.1, 1.0, n_rows)
    rows = [dense[i] for i in range(n_rows)]
    # box rows keep the iterate bounded like the solver's real constraint sets
    for j in range(n_vars):
        e = np.zeros(n_vars)
        e[j] = -1.0
        rows.append(e)
        b = np.append(b, 0.0)
    indptr = [0]
    indices = []
    data = []
    for r in rows:
        nz = np.nonzero(r)[0]
        indices.extend(nz.tolist())
        data.extend(r[nz].tolist())
        indptr.append(len(indices))
    norm2 = np.array([float(r @ r) for r in rows])
    x = interior + rng.normal(scale=2.0, size=n_vars)
    return (x, np.array(indptr, dtype=np.int64), np.array(indices, dtype=np.int64),
            np.array(data), np.asarray(b, dtype=float), norm2)


def bench(sizes, repeats):
    from tile360.kernels import BACKEND, project_halfspaces

    results = []
    for n_vars in sizes:
        prob = make_problem(n_vars, 2 * n_vars, seed=n_vars)
        project_halfspaces(*prob)  # warm-up (triggers JIT compilation)
        times = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            z, _, sweeps, viol = project_halfspaces(*prob)
            times.append(time.perf_counter() - t0)
        results.append({
            "backend": BACKEND,
            "n_vars": n_vars,
            "best_ms": min(times) * 1e3,
            "sweeps": int(sweeps),
            "violation": float(viol),
        })
    return results


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--sizes", default="30,100,300")
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--inner", action="store_true", help=argparse.SUPPRESS)
    args = parser.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]

    results = bench(sizes, args.repeats)
    if args.inner:
        print(json.dumps(results))
        return

    env = dict(os.environ, TILE360_DISABLE_NUMBA="1")
    out = subprocess.run(
        [sys.executable, os.path.abspath(__file__), "--inner",
         "--sizes", args.sizes, "--repeats", str(args.repeats)],
        env=env, capture_output=True, text=True, check=True,
    )
    fallback = json.loads(out.stdout.strip().splitlines()[-1])

    print(f"{'n_vars':>8} {'numba ms':>10} {'numpy ms':>10} {'speedup':>8}  sweeps  viol")
    for a, b in zip(results, fallback):
        speed = b["best_ms"] / a["best_ms"] if a["best_ms"] > 0 else float("inf")
        print(f"{a['n_vars']:>8} {a['best_ms']:>10.3f} {b['best_ms']:>10.3f} "
              f"{speed:>7.1f}x  {a['sweeps']:>6}  {a['violation']:.2e}")


if __name__ == "__main__":
    main()
