"""Time the compiled and pure-Python morphology/labeling kernels.

    python3 benchmarks/bench_kernels.py [--size 512] [--repeat 5]

Both backends are run on the same random mask; outputs are checked for
equality before timings are reported.
"""
import argparse
import time

import numpy as np

from papilledema import kernels


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--size", type=int, default=512)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    mask = rng.random((args.size, args.size)) < 0.5
    img = rng.random((args.size, args.size))
    r = max(1, round(0.02 * args.size))
    cases = {
        "opening": lambda impl: kernels.opening(mask, r, impl=impl),
        "closing": lambda impl: kernels.closing(mask, r, impl=impl),
        "disk_mean": lambda impl: kernels.disk_mean(img, r, impl=impl),
        "label8": lambda impl: kernels.label8(mask, impl=impl)[0],
    }
    impls = ["python"] + (["cython"] if kernels.HAVE_EXTENSION else [])
    print(f"size {args.size}x{args.size}, radius {r}, best of {args.repeat}")
    print(f"{'kernel':<10}" + "".join(f"{i:>12}" for i in impls) + ("     speedup" if len(impls) == 2 else ""))
    for name, fn in cases.items():
        outs = [fn(i) for i in impls]
        assert all(np.array_equal(outs[0], o) for o in outs[1:]), f"{name}: backends disagree"
        ts = [best_of(lambda: fn(i), args.repeat) for i in impls]
        line = f"{name:<10}" + "".join(f"{t * 1e3:>10.1f}ms" for t in ts)
        if len(ts) == 2:
            line += f"{ts[0] / ts[1]:>11.1f}x"
        print(line)


if __name__ == "__main__":
    main()
