"""Compiled kernels against the numpy fallback.

Usage: ``python3 benchmarks/bench_kernels.py [--n 1000] [--repeat 5]``
"""

import argparse
import timeit

import numpy as np

from idmauc import _fallback

try:
    from idmauc import _kernels
except ImportError:  # extension not built
    _kernels = None

TRUTH = (0.05, 0.5, 0.05, 0.5, 0.56, 0.5)


def cases(n, rng):
    s = rng.uniform(0, 60, n)
    t = s + rng.uniform(0.5, 60, n)
    d = rng.uniform(0, 0.05, (3, 20 * n))
    return {
        "weibull_p01": lambda m: m.weibull_p01(s, t, *TRUTH),
        "weibull_p01 grad": lambda m: m.weibull_p01(s, t, *TRUTH, grad=True),
        "aj_forward": lambda m: m.aj_forward(d[0], d[1], d[2], 1.0, 0.0),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=1000, help="intervals per call")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(1)
    backends = {"python": _fallback}
    if _kernels is not None:
        backends["compiled"] = _kernels
    else:
        print("compiled extension not available; timing the fallback only")
    print(f"{'kernel':<18}" + "".join(f"{b:>12}" for b in backends) + f"{'speed-up':>10}")
    for name, fn in cases(args.n, rng).items():
        best = {b: min(timeit.repeat(lambda: fn(m), number=1, repeat=args.repeat))
                for b, m in backends.items()}
        ratio = best["python"] / best["compiled"] if "compiled" in best else float("nan")
        print(f"{name:<18}" + "".join(f"{best[b] * 1e3:>10.2f}ms" for b in backends)
              + f"{ratio:>9.1f}x")


if __name__ == "__main__":
    main()
