"""Benchmark the compiled convolution kernels against the numpy fallback.

Runs the forward and backward passes on the shapes that dominate training
(order-encoder trunk and frame-predictor layers) and prints per-shape
timings plus a numerical parity check.

Usage: python benchmarks/bench_kernels.py [repeats]
"""
import sys
import time

import numpy as np

from hypercut.diffcore import kernels


SHAPES = [
    # (label, batch, in_ch, out_ch, height, stride)
    ("encoder conv1 32x32", 64, 2, 24, 32, 2),
    ("encoder conv2 16x16", 64, 24, 48, 16, 2),
    ("encoder conv3 8x8", 64, 48, 96, 8, 2),
    ("encoder res 4x4", 64, 96, 96, 4, 1),
    ("predictor down1 32x32", 32, 1, 24, 32, 2),
    ("predictor res 8x8", 32, 48, 48, 8, 1),
    ("predictor out 32x32", 32, 24, 7, 32, 1),
]


def time_fn(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    repeats = int(sys.argv[1]) if len(sys.argv) > 1 else 20
    if kernels.BACKEND != "cython":
        print("compiled backend unavailable; rebuild the extension "
              "(pip install -e .) to compare")
        return 1
    py_forward, py_backward = kernels.python_kernels()

    rng = np.random.default_rng(0)
    print(f"{'shape':26} {'fwd cy':>9} {'fwd py':>9} {'bwd cy':>9} {'bwd py':>9} "
          f"{'speedup':>8}")
    total_cy = total_py = 0.0
    for label, n, c, o, h, stride in SHAPES:
        x = rng.random((n, c, h, h), dtype=np.float32)
        w = (rng.random((o, c, 3, 3), dtype=np.float32) - 0.5) * 0.2
        b = np.zeros(o, dtype=np.float32)
        out = kernels.conv2d_forward(x, w, b, stride, 1)
        gy = rng.random(out.shape, dtype=np.float32)

        ref = py_forward(x, w, b, stride, 1)
        if not np.allclose(out, ref, rtol=1e-4, atol=1e-5):
            raise AssertionError(f"forward parity failure on {label}")
        for g_cy, g_py in zip(kernels.conv2d_backward(gy, x, w, stride, 1),
                              py_backward(gy, x, w, stride, 1)):
            scale = max(np.abs(g_py).max(), 1.0)
            if not np.allclose(g_cy, g_py, rtol=1e-4, atol=1e-4 * scale):
                raise AssertionError(f"backward parity failure on {label}")

        f_cy = time_fn(lambda: kernels.conv2d_forward(x, w, b, stride, 1), repeats)
        f_py = time_fn(lambda: py_forward(x, w, b, stride, 1), repeats)
        b_cy = time_fn(lambda: kernels.conv2d_backward(gy, x, w, stride, 1), repeats)
        b_py = time_fn(lambda: py_backward(gy, x, w, stride, 1), repeats)
        total_cy += f_cy + b_cy
        total_py += f_py + b_py
        print(f"{label:26} {f_cy * 1e3:8.2f}m {f_py * 1e3:8.2f}m "
              f"{b_cy * 1e3:8.2f}m {b_py * 1e3:8.2f}m "
              f"{(f_py + b_py) / (f_cy + b_cy):7.2f}x")
    print(f"{'total':26} {'':9} {'':9} {'':9} {'':9} "
          f"{total_py / total_cy:7.2f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
