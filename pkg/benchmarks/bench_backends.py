"""Benchmark the compiled leapfrog kernels against the pure-numpy fallback.

Times the raw trajectory-extension kernel and a full NUTS-step workload at a
few dimensions, printing a side-by-side table with speedups.  Run as

    python benchmarks/bench_backends.py
"""
import time

import numpy as np

from nutslab import KernelConfig, OrbitWorkspace, StreamSet, nuts_step, std_gaussian
from nutslab.kernels import _extend_jit, _extend_np


def time_call(fn, n_repeat):
    best = float("inf")
    for _ in range(n_repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_extend(d, n_steps, n_repeat=7):
    rng = np.random.default_rng(0)
    q = rng.standard_normal(d)
    p = rng.standard_normal(d)
    aux = np.ones(d)
    g = aux * q
    oq = np.empty((n_steps, d))
    op = np.empty((n_steps, d))
    ow = np.empty(n_steps)
    og = np.empty(d)
    _extend_jit(0, aux, q, p, g, 0.05, n_steps, oq, op, ow, og, 1e10)  # warm-up
    t_jit = time_call(lambda: _extend_jit(0, aux, q, p, g, 0.05, n_steps,
                                          oq, op, ow, og, 1e10), n_repeat)
    t_np = time_call(lambda: _extend_np(0, aux, q, p, g, 0.05, n_steps,
                                        oq, op, ow, og, 1e10), n_repeat)
    return t_jit, t_np


def bench_nuts_steps(d, n_steps_chain, n_repeat=3):
    target = std_gaussian(d)
    h = 1.5 * np.pi / 63 if d >= 256 else 1.5 * np.pi / 31
    cfg = KernelConfig("nuts-mul", h=h, seed=0, K_m=8)
    ws = OrbitWorkspace(d, 8)

    def run():
        streams = StreamSet(0)
        q = np.zeros(d)
        for _ in range(n_steps_chain):
            q, _ = nuts_step(cfg, target, q, streams, workspace=ws)

    run()  # warm-up (jit compile on first use)
    return time_call(run, n_repeat)


def main():
    from nutslab.backend import backend_name
    print(f"active backend for nuts_step: {backend_name()}")
    print("(set NUTSLAB_BACKEND=numpy to benchmark the fallback end to end)\n")

    print("raw trajectory extension (512 leapfrog steps):")
    print(f"{'d':>6} {'numba [ms]':>12} {'numpy [ms]':>12} {'speedup':>9}")
    for d in (4, 64, 1024):
        t_jit, t_np = bench_extend(d, 512)
        print(f"{d:>6} {t_jit * 1e3:>12.3f} {t_np * 1e3:>12.3f} "
              f"{t_np / t_jit:>8.1f}x")

    print("\nfull NUTS chain (200 steps, current backend):")
    print(f"{'d':>6} {'time [s]':>10} {'ms/step':>9}")
    for d in (16, 256, 1024):
        t = bench_nuts_steps(d, 200)
        print(f"{d:>6} {t:>10.3f} {t / 200 * 1e3:>9.3f}")


if __name__ == "__main__":
    main()
