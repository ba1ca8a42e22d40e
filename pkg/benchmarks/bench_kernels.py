"""Compare the compiled kernel core against the NumPy fallback.

Times the Gaussian sampler and the particle-path kernels on both
backends and prints a throughput table. Run with

    python benchmarks/bench_kernels.py [--count N] [--steps K]
"""

import argparse
import time

import numpy as np

from mfgtorus._kernels import get_backend


def time_normals(backend, count):
    seed = np.random.SeedSequence(1234)
    backend.standard_normals(seed, 1000)  # warm up
    t0 = time.perf_counter()
    backend.standard_normals(seed, count)
    return (time.perf_counter() - t0) / count


def time_em_1d(backend, count, steps, n=128):
    rng = np.random.default_rng(0)
    x = rng.random(count)
    drift = np.sin(2 * np.pi * np.arange(n) / n)
    hist = np.zeros(n, dtype=np.int64)
    seed = np.random.SeedSequence(99)
    t0 = time.perf_counter()
    backend.em_block_1d(x, drift, 1e-3, np.sqrt(2e-3), steps, steps // 2, hist, seed)
    return (time.perf_counter() - t0) / (count * steps)


def time_em_2d(backend, count, steps, n=64):
    rng = np.random.default_rng(0)
    x = rng.random(count)
    y = rng.random(count)
    grid = np.arange(n) / n
    bx = np.ascontiguousarray(np.sin(2 * np.pi * grid)[:, None] * np.ones(n))
    by = np.ascontiguousarray(np.ones(n)[:, None] * np.cos(2 * np.pi * grid))
    hist = np.zeros(n * n, dtype=np.int64)
    seed = np.random.SeedSequence(99)
    t0 = time.perf_counter()
    backend.em_block_2d(x, y, bx, by, 1e-3, np.sqrt(2e-3), steps, steps // 2, hist, seed)
    return (time.perf_counter() - t0) / (count * steps)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--count", type=int, default=20_000)
    parser.add_argument("--steps", type=int, default=2_000)
    args = parser.parse_args()

    backends = {}
    for name in ("numpy", "compiled"):
        try:
            backends[name] = get_backend(name)
        except (ImportError, ValueError):
            print(f"backend {name!r} unavailable; skipping")

    rows = []
    for name, mod in backends.items():
        rows.append((
            name,
            time_normals(mod, 2_000_000) * 1e9,
            time_em_1d(mod, args.count, args.steps) * 1e9,
            time_em_2d(mod, args.count, args.steps) * 1e9,
        ))

    print(f"{'backend':<10} {'normals ns/draw':>16} {'em 1d ns/pstep':>16} {'em 2d ns/pstep':>16}")
    for name, a, b, c in rows:
        print(f"{name:<10} {a:>16.1f} {b:>16.1f} {c:>16.1f}")
    if len(rows) == 2:
        base = {r[0]: r for r in rows}
        n_, e1, e2 = (base["numpy"][i] / base["compiled"][i] for i in (1, 2, 3))
        print(f"{'speedup':<10} {n_:>15.1f}x {e1:>15.1f}x {e2:>15.1f}x")


if __name__ == "__main__":
    main()
