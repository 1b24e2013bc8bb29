"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--reps N]

Prints one CSV row per kernel: median milliseconds for each backend, the
speed-up, and which backend ``gazecast.kernels`` dispatches that input to.
Compiled columns are blank when the extension is not built.
"""

import argparse
import statistics
import time

import numpy as np

from gazecast import _pykernels, kernels


def _cases(rng):
    gray = rng.random((288, 384))
    frame = rng.random((576, 768, 3))
    wraps = rng.uniform(-539, 539, 100_000)
    cases = []
    for n, hd in ((1, 128), (32, 64)):
        z = rng.normal(size=(n, 4 * hd)).astype(np.float32)
        c = rng.normal(size=(n, hd)).astype(np.float32)
        hc, acts = _pykernels.lstm_cell_forward(z, c)
        g = rng.normal(size=hc.shape).astype(np.float32)
        cases += [
            (f"lstm_cell_forward[{n}x{hd}]", "lstm_cell_forward", (z, c)),
            (f"lstm_cell_backward[{n}x{hd}]", "lstm_cell_backward", (g, acts, c, hc)),
        ]
    small = rng.random((36, 48))
    return cases + [
        ("wrap_angles[100k]", "wrap_angles", (wraps,)),
        ("area_pool_mean[36x48->9x12]", "area_pool", (small, 9, 12, False)),
        ("area_pool_mean[288x384->9x12]", "area_pool", (gray, 9, 12, False)),
        ("area_pool_max[288x384->9x12]", "area_pool", (gray, 9, 12, True)),
        ("bilinear_resize[768x576->384x288]", "bilinear_resize", (frame, 288, 384)),
    ]


def _dispatched(name, fargs):
    return "cython" if kernels.backend_for(name, *fargs) is kernels.compiled else "python"


def _median_ms(fn, args, reps):
    fn(*args)
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return 1000 * statistics.median(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--reps", type=int, default=50)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"# selected backend: {kernels.BACKEND}")
    print("kernel,python_ms,cython_ms,speedup,dispatched")
    for label, name, fargs in _cases(rng):
        py = _median_ms(getattr(_pykernels, name), fargs, args.reps)
        if kernels.compiled is None:
            print(f"{label},{py:.4f},,,python")
            continue
        cy = _median_ms(getattr(kernels.compiled, name), fargs, args.reps)
        print(f"{label},{py:.4f},{cy:.4f},{py / cy:.2f},{_dispatched(name, fargs)}")


if __name__ == "__main__":
    main()
