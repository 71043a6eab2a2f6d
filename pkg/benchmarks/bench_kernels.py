"""Compare the compiled and numpy resampling kernels.

    python3 benchmarks/bench_kernels.py [--height 256] [--repeat 5]

Prints the best-of-N wall time per kernel and backend, and checks that both
backends agree bit for bit on every output.
"""

import argparse
import time

import numpy as np

from duopano.kernels import backends


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--height", type=int, default=256)
    ap.add_argument("--samples", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    H, W, C = args.height, 2 * args.height, 3
    src = rng.random((C, H, W))
    u = rng.uniform(-W, 2 * W, args.samples)
    v = rng.uniform(-1, H + 1, args.samples)
    vals = rng.random((C, args.samples))

    cases = {
        "sample_bilinear": lambda k: k.sample_bilinear(src, u, v),
        "sample_nearest": lambda k: k.sample_nearest(src, u, v),
        "splat_bilinear": lambda k: k.splat_bilinear(vals, u, v, H, W),
    }
    found = backends()
    print(f"grid {H}x{W}, {args.samples} samples, best of {args.repeat}")
    print(f"{'kernel':<18}" + "".join(f"{name:>12}" for name in found) + "     speedup  identical")
    for case, fn in cases.items():
        times = {name: best_of(lambda: fn(k), args.repeat) for name, k in found.items()}
        outs = [fn(k) for k in found.values()]
        if isinstance(outs[0], tuple):
            same = all(all(np.array_equal(a, b) for a, b in zip(outs[0], o)) for o in outs[1:])
        else:
            same = all(np.array_equal(outs[0], o) for o in outs[1:])
        speed = times["python"] / times["cython"] if "cython" in times else float("nan")
        row = f"{case:<18}" + "".join(f"{1e3 * t:>10.2f}ms" for t in times.values())
        print(f"{row}  {speed:>8.2f}x  {same}")


if __name__ == "__main__":
    main()
