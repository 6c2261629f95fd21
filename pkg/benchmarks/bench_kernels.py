"""Compare the compiled and numpy forest kernels.

    python benchmarks/bench_kernels.py [--trees 200] [--n 2500] [--m 2500] [--depth 6]

Both backends get identical inputs; the script also checks that their
outputs agree bit for bit.
"""

import argparse
import time

import numpy as np

from clusterens.cforest import _kernels_py

try:
    from clusterens.cforest import _kernels as _compiled
except ImportError:
    _compiled = None


def _time(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trees", type=int, default=200)
    ap.add_argument("--n", type=int, default=2500)
    ap.add_argument("--m", type=int, default=2500)
    ap.add_argument("--p", type=int, default=3)
    ap.add_argument("--q", type=int, default=1, help="response columns")
    ap.add_argument("--depth", type=int, default=6)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    U_tr = rng.random((args.n, args.p))
    U_te = rng.random((args.m, args.p))
    Z = rng.standard_normal((args.n, args.q))
    coords = rng.integers(0, args.p, size=(args.trees, max(2**args.depth - 1, 1))).astype(np.intc)

    print(f"trees={args.trees} n={args.n} m={args.m} p={args.p} q={args.q} depth={args.depth}")
    t_py, out_py = _time(lambda: _kernels_py.forest_leaf_mean(U_tr, Z, U_te, coords, args.depth), args.repeat)
    print(f"python    {t_py * 1e3:9.1f} ms")
    if _compiled is None:
        print("compiled  (extension not built)")
        return 0
    t_c, out_c = _time(lambda: _compiled.forest_leaf_mean(U_tr, Z, U_te, coords, args.depth), args.repeat)
    print(f"compiled  {t_c * 1e3:9.1f} ms")
    print(f"speedup   {t_py / t_c:9.1f}x")
    print(f"identical {np.array_equal(out_py, out_c)}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
