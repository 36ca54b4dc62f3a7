"""Time the numba and pure-numpy versions of the hot kernels.

Usage::

    python3 benchmarks/bench_kernels.py --repeat 5

Each kernel is warmed up once (so numba compilation is excluded), then
timed ``--repeat`` times; the best wall time per path is reported together
with the max absolute difference between the two results.
"""

import argparse
import time

import numpy as np

from wflab import kernels
from wflab._jit import HAVE_NUMBA


def _cases(rng, scale):
    n = 4096 * scale
    f = rng.standard_normal(n).cumsum() / np.sqrt(n)
    yield "sup_difference_quotient", "sup_difference_quotient", (f, 0.5, 2 * np.pi / n)

    m = 256 * scale
    A1, A2, B1, B2 = (rng.standard_normal(m) + 1j * rng.standard_normal(m) for _ in range(4))
    xi = np.fft.fftfreq(m, 1.0 / m)
    ia = np.arange(m, dtype=np.int64)
    yield "separable_mode_energy", "separable_mode_energy", (A1, A2, B1, B2, -1.0, xi, xi, 1.0, -0.75, ia, ia)

    K = 8
    omega = (2.0 ** np.arange(1, K + 1))[None, :]
    ca = 0.15 * 2.0 ** (-2.0 * np.arange(1, K + 1))[None, :]
    sa = np.zeros_like(ca)
    yield "null_flow", "null_flow", (np.array([0.3]), np.array([-1.0]), 1.0, 1e-3, 2000 * scale,
                                     1.0, omega, ca, sa)

    P = 256
    Fa2 = rng.random((P, P))
    pts = rng.standard_normal((20000 * scale, 4)) * 20
    yield "cone_sample_energy", "cone_sample_energy", (pts, Fa2, 1.0, 1.0)


def _best(fn, args, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--scale", type=int, default=1, help="problem size multiplier")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    if not HAVE_NUMBA:
        print("numba unavailable or disabled; the jit column times the fallback loops")
    rng = np.random.default_rng(args.seed)
    print("%-26s %12s %12s %9s %12s" % ("kernel", "numpy [s]", "numba [s]", "speedup", "max |diff|"))
    for label, name, call in _cases(rng, args.scale):
        f_np = getattr(kernels, name + "_numpy")
        f_jit = getattr(kernels, name + "_jit")
        f_jit(*call)
        t_np, r_np = _best(f_np, call, args.repeat)
        t_jit, r_jit = _best(f_jit, call, args.repeat)
        diff = float(np.max(np.abs(np.asarray(r_np) - np.asarray(r_jit))))
        print("%-26s %12.4g %12.4g %9.1f %12.3g" % (label, t_np, t_jit, t_np / t_jit, diff))


if __name__ == "__main__":
    main()
