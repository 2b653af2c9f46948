"""Compare the compiled sparse kernels with the numpy fallback.

    python3 benchmarks/bench_kernels.py --n 5000 --degree 10 --dim 64
"""

import argparse
import timeit

import numpy as np

from fusiongnn import _kernels_py

try:
    from fusiongnn import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None


def random_csr(n, degree, rng):
    rows = np.repeat(np.arange(n), degree)
    cols = rng.integers(0, n, size=n * degree)
    order = np.lexsort((cols, rows))
    rows, cols = rows[order], cols[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, rows + 1, 1)
    return np.cumsum(indptr), cols.astype(np.int64), rng.normal(size=len(cols))


def cases(n, degree, dim, rng):
    indptr, cols, data = random_csr(n, degree, rng)
    dense = rng.normal(size=(n, dim))
    return {
        "csr_spmm": lambda k: k.csr_spmm(indptr, cols, data, dense),
        "sddmm": lambda k: k.sddmm(indptr, cols, dense, dense),
        "segment_sum": lambda k: k.segment_sum(indptr, data),
        "segment_softmax": lambda k: k.segment_softmax(indptr, data),
    }


def best_of(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=5000)
    ap.add_argument("--degree", type=int, default=10)
    ap.add_argument("--dim", type=int, default=64)
    ap.add_argument("--repeat", type=int, default=7)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    print(f"n={args.n} nnz={args.n * args.degree} dim={args.dim}, best of {args.repeat}")
    print(f"{'kernel':<16}{'numpy ms':>10}{'cython ms':>11}{'speedup':>9}")
    for name, fn in cases(args.n, args.degree, args.dim, rng).items():
        t_py = best_of(lambda: fn(_kernels_py), args.repeat) * 1e3
        if _compiled is None:
            print(f"{name:<16}{t_py:>10.3f}{'-':>11}{'-':>9}")
            continue
        ref, got = fn(_kernels_py), fn(_compiled)
        if not np.allclose(ref, got, rtol=1e-12, atol=1e-12):
            raise SystemExit(f"{name}: backends disagree")
        t_cy = best_of(lambda: fn(_compiled), args.repeat) * 1e3
        print(f"{name:<16}{t_py:>10.3f}{t_cy:>11.3f}{t_py / t_cy:>8.1f}x")


if __name__ == "__main__":
    main()
