"""Timing comparison of the compiled kernel core against the NumPy fallback.

Run:  python3 benchmarks/bench_kernels.py
"""

import time

import numpy as np

from spillhar._kernels import available_backends


def best_of(fn, repeats=5):
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def garch_case(rng):
    r = 0.02 * rng.standard_normal(5000)
    args = (1e-5, 0.07, 0.05, 0.88, 4e-4)
    return lambda impl: impl.garch_nll(r, *args)


def qvar_case(rng):
    T, N, p = 1000, 6, 1
    k = 1 + N * p
    Y = rng.standard_normal((T, N))
    Z = np.column_stack([np.ones(T), rng.standard_normal((T, k - 1))])
    B0 = np.zeros((N, k))
    P0 = np.broadcast_to(10 * np.eye(k), (N, k, k)).copy()
    S0 = np.eye(N)
    return lambda impl: impl.qvar_filter(Y, Z, 0.05, 0.99, B0, P0, S0, 1e-4)


def gfevd_case(rng):
    T, N, H = 500, 6, 10
    A = rng.uniform(-0.2, 0.2, (T, N, N))
    sig = np.empty((T, N, N))
    for t in range(T):
        L = np.tril(rng.uniform(0.2, 1.0, (N, N)))
        sig[t] = L @ L.T
    return lambda impl: impl.gfevd_path(A, sig, H)


CASES = {
    "garch_nll (T=5000)": garch_case,
    "qvar_filter (T=1000, N=6)": qvar_case,
    "gfevd_path (T=500, N=6, H=10)": gfevd_case,
}


def main():
    backends = available_backends()
    print(f"backends available: {', '.join(backends)}")
    header = f"{'kernel':<32}" + "".join(f"{name:>12}" for name in backends)
    if len(backends) > 1:
        header += f"{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for label, case in CASES.items():
        rng = np.random.default_rng(0)
        run = case(rng)
        times = {}
        for name, impl in backends.items():
            run(impl)  # warm up
            times[name] = best_of(lambda: run(impl))
        row = f"{label:<32}" + "".join(f"{times[n] * 1e3:>10.2f}ms"
                                       for n in backends)
        if "cython" in times and "python" in times:
            row += f"{times['python'] / times['cython']:>9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
