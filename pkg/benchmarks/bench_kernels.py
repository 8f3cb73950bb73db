"""Time the numba kernels against the pure-numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Both backends are imported directly, so the environment flag does not
matter here. Results must agree before timings are reported.
"""

import argparse
import time

import numpy as np

from planesweep.kernels import _numba, _numpy


def best_of(fn, repeat):
    fn()  # warm-up (includes JIT compilation for numba)
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def cases(rng):
    img = rng.standard_normal((32, 24, 32)).astype(np.float32)
    x = rng.uniform(-2, 33, size=48 * 24 * 32)
    y = rng.uniform(-2, 25, size=48 * 24 * 32)
    g = rng.standard_normal((32, x.size)).astype(np.float32)
    pts = rng.uniform(0, 100, size=(20000, 3))
    q = rng.uniform(0, 100, size=(5000, 3))
    return {
        "bilinear forward [32x24x32, D=48]": lambda m: m.bilinear_forward(img, x, y),
        "bilinear backward": lambda m: m.bilinear_backward(img, x, y, g, True),
        "nn brute 5k x 20k": lambda m: m.nn_brute(q, pts),
        "nn grid 5k x 20k": lambda m: m.nn_grid(q, pts, 4.0),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':<36}{'numpy ms':>10}{'numba ms':>10}{'speedup':>9}")
    for name, call in cases(rng).items():
        a, b = call(_numpy), call(_numba)
        a = a if isinstance(a, tuple) else (a,)
        b = b if isinstance(b, tuple) else (b,)
        for u, v in zip(a, b):
            if u is not None and not np.allclose(u, v, rtol=1e-4, atol=1e-4):
                raise SystemExit(f"{name}: backends disagree")
        tn = best_of(lambda: call(_numpy), args.repeat) * 1e3
        tj = best_of(lambda: call(_numba), args.repeat) * 1e3
        print(f"{name:<36}{tn:>10.2f}{tj:>10.2f}{tn / tj:>8.1f}x")


if __name__ == "__main__":
    main()
