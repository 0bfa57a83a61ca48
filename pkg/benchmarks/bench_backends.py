"""Timing comparison of the numba kernels against the pure-numpy fallback.

Run:  python3 benchmarks/bench_backends.py
The active backend for the package itself is chosen by the
DEFAULTABLE_HJB_NUMBA environment variable; this script times both
implementations directly regardless of the flag.
"""

import time

import numpy as np

from defaultable_hjb import backends


def timeit(fn, *args, repeat=5):
    fn(*args)  # warm-up (also triggers JIT compilation)
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def row(name, t_np, t_nb):
    speedup = t_np / t_nb if t_nb > 0 else float("inf")
    print(f"{name:<28s} numpy {t_np * 1e3:9.3f} ms   "
          f"numba {t_nb * 1e3:9.3f} ms   speedup {speedup:6.2f}x")


def main():
    rng = np.random.default_rng(0)
    print(f"numba available: {backends.HAVE_NUMBA}; "
          f"active backend: {backends.backend_name()}\n")

    ys = np.exp(rng.uniform(-8, 8, 1_000_000))
    us = rng.uniform(1, 1000, 1_000_000)
    z = rng.standard_normal((20_000, 500))
    intensity = 0.05 + 0.5 * rng.random((20_000, 501))
    draws = rng.exponential(size=20_000)
    n = 100_000
    dl, du = rng.random(n - 1), rng.random(n - 1)
    d = 4.0 + rng.random(n)
    rhs = rng.random(n)

    cases = [
        ("theta (1e6 pts)", backends.theta_array_np,
         backends.theta_array_nb, (ys,)),
        ("theta_from_log (1e6 pts)", backends.theta_from_log_array_np,
         backends.theta_from_log_array_nb, (us,)),
        ("tridiag_solve (1e5)", backends.tridiag_solve_np,
         backends.tridiag_solve_nb, (dl, d, du, rhs)),
        ("cir_paths (2e4 x 500)", backends.cir_paths_np,
         backends.cir_paths_nb, (0.06, 0.25, 0.06, 0.1, 1 / 500, z)),
        ("ou_paths (2e4 x 500)", backends.ou_paths_np,
         backends.ou_paths_nb, (1.0, 0.5, 1 / 500, z)),
        ("crossing_times (2e4)", backends.crossing_times_np,
         backends.crossing_times_nb, (intensity, 1 / 500, draws)),
    ]
    for name, f_np, f_nb, args in cases:
        t_np = timeit(f_np, *args)
        if backends.HAVE_NUMBA:
            t_nb = timeit(f_nb, *args)
            row(name, t_np, t_nb)
        else:
            print(f"{name:<28s} numpy {t_np * 1e3:9.3f} ms   (numba absent)")


if __name__ == "__main__":
    main()
