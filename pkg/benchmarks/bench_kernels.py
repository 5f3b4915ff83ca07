"""Time the compiled kernels against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--sizes 256 512 1024] [--repeat 5]
"""

import argparse
import timeit

import numpy as np

from ccmlab.kernels import available_backends, get_backend


def _cases(n, rng):
    c = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    z = rng.uniform(-5, 5, 64) + 1j * rng.uniform(0.1, 3.0, 64)
    rows = rng.standard_normal((64, n)) + 1j * rng.standard_normal((64, n))
    dxi = 2 * np.pi / 100.0
    return {
        "toeplitz_gram": lambda k: k.toeplitz_gram(c, 1.0),
        "halfplane_sum_shared": lambda k: k.halfplane_sum_shared(c, z, dxi),
        "halfplane_sum": lambda k: k.halfplane_sum(rows, z, dxi),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[256, 512, 1024])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    backends = available_backends()
    if "compiled" not in backends:
        print("compiled extension not built; only the numpy fallback is timed")
    rng = np.random.default_rng(0)
    print(f"{'kernel':22s} {'n':>6s} " + " ".join(f"{b:>12s}" for b in backends) + "  speedup")
    for n in args.sizes:
        for name, call in _cases(n, rng).items():
            times = {}
            for b in backends:
                mod = get_backend(b)
                call(mod)
                times[b] = min(timeit.repeat(lambda: call(mod), number=1, repeat=args.repeat))
            speed = times["python"] / times["compiled"] if "compiled" in times else float("nan")
            cols = " ".join(f"{times[b] * 1e3:10.2f}ms" for b in backends)
            print(f"{name:22s} {n:6d} {cols}  {speed:6.1f}x")


if __name__ == "__main__":
    main()
