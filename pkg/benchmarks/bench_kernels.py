"""Time the compiled and numpy entropy kernels on random interval series.

Usage: python benchmarks/bench_kernels.py [--sizes 300 1000 3000] [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from hrvprv.kernels import backends


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[300, 1000, 3000])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--m", type=int, default=2)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    impls = backends()
    rng = np.random.default_rng(args.seed)
    print(f"{'n':>6} {'kernel':>7} " + " ".join(f"{name:>12}" for name in impls) + "   speedup")
    for n in args.sizes:
        x = np.ascontiguousarray(rng.normal(800.0, 40.0, n))
        r = 0.2 * float(np.std(x))
        for k, kernel in enumerate(("apen", "sampen")):
            best = {}
            for name, fns in impls.items():
                fn = fns[k]
                best[name] = min(timeit.repeat(lambda: fn(x, args.m, r), number=1, repeat=args.repeat))
            speed = best["python"] / best["cython"] if "cython" in best else float("nan")
            cells = " ".join(f"{1e3 * best[name]:>10.2f}ms" for name in impls)
            print(f"{n:>6} {kernel:>7} {cells}   {speed:6.1f}x")


if __name__ == "__main__":
    main()
