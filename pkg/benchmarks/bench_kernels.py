"""Compare the compiled and numpy product kernels.

Times CSR products with A and A^T on random sparse matrices, then one
full solve per backend. Run with ``python3 benchmarks/bench_kernels.py``.
"""

import argparse
import time

import numpy as np

from ipjdsvd import SparseMatrix, kernels, solve


def random_sparse(m, n, density, rng):
    nnz = int(m * n * density)
    rows = rng.integers(0, m, nnz)
    cols = rng.integers(0, n, nnz)
    return SparseMatrix.from_coo((m, n), rows, cols, rng.standard_normal(nnz))


def backends():
    out = ["python"]
    try:
        kernels.get_kernels("cython")
        out.append("cython")
    except ImportError:
        pass
    return out


def time_products(a, backend, repeats):
    a.use_backend(backend)
    x = np.ones(a.shape[1])
    y = np.ones(a.shape[0])
    best = np.inf
    for _ in range(5):
        t0 = time.perf_counter()
        for _ in range(repeats):
            a.apply(x)
            a.apply_transpose(y)
        best = min(best, (time.perf_counter() - t0) / (2 * repeats))
    return best


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--repeats", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    rng = np.random.default_rng(args.seed)
    names = backends()

    print(f"{'shape':>14} {'nnz':>9} " + " ".join(f"{n + ' (us)':>14}" for n in names))
    for m, n, dens in [(500, 400, 0.05), (5000, 4000, 0.002), (50000, 40000, 2e-4), (200000, 150000, 5e-5)]:
        a = random_sparse(m, n, dens, rng)
        times = [time_products(a, b, args.repeats) * 1e6 for b in names]
        print(f"{m:>7}x{n:<6} {a.nnz:>9} " + " ".join(f"{t:>14.1f}" for t in times))

    a = random_sparse(20000, 15000, 5e-4, rng)
    tau = 0.5 * a.norm_estimates().norme
    print(f"\nsolve: 20000x15000, nnz {a.nnz}, tau {tau:.3g}, 3 triplets")
    for b in names:
        a.use_backend(b)
        a.reset_count()
        t0 = time.perf_counter()
        rep = solve(a, tau=tau, ell=3, tol=1e-8, maxit_outer=200)
        dt = time.perf_counter() - t0
        print(f"  {b:>7}: {dt:7.2f} s  status {rep.status.value}  MVs {rep.mvs}")


if __name__ == "__main__":
    main()
