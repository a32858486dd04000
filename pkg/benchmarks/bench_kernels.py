"""Compare the numba and pure-numpy kernel backends for speed and agreement.

    python3 benchmarks/bench_kernels.py [--quick] [--repeat 5]

Both implementations are imported directly, so the ``SCOREMEM_BACKEND``
switch is irrelevant here.  Compile time is excluded by a warm-up call.
"""

import argparse
import time

import numpy as np

from scoremem._kernels import numba_impl, numpy_impl


def best_of(fn, repeat):
    fn()  # warm-up / JIT
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def max_rel_diff(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    scale = max(np.abs(a).max(), np.abs(b).max(), 1e-300)
    return float(np.abs(a - b).max() / scale)


def cases(quick):
    rng = np.random.default_rng(0)
    M = 1000 if quick else 5000
    out = []
    for N, d in ((20, 2), (1000, 10)):
        X = rng.standard_normal((M, d))
        C = rng.standard_normal((N, d))
        out.append((f"mixture_stats M={M} N={N} d={d}",
                    lambda impl, X=X, C=C: impl.mixture_stats(X, C, 0.05)))
        out.append((f"nearest_two   M={M} N={N} d={d}",
                    lambda impl, X=X, C=C: impl.nearest_two(X, C)))
    d, B = 2, 20
    for width in (8, 64, 128):
        din = d + 16
        P = (din + 1) * width + (width + 1) * width + (width + 1) * d
        theta0 = rng.standard_normal(P) * 0.1
        E = 200 if quick else 1000
        Z = rng.standard_normal((E, B, din))
        eta = rng.standard_normal((E, B, d))
        sig = rng.uniform(0.01, 1.0, (E, B))

        def train(impl, theta0=theta0, Z=Z, eta=eta, sig=sig, width=width, din=din, P=P):
            th = theta0.copy()
            m, v = np.zeros(P), np.zeros(P)
            impl.train_chunk(th, m, v, 0, Z, eta, sig, 0, 0.0, 1e-3, 0.9, 0.999, 1e-8,
                             din, width, d)
            return th

        out.append((f"train_chunk   W={width} epochs={E}", train))
        Zf = rng.standard_normal((M, din))
        out.append((f"mlp_forward   W={width} M={M}",
                    lambda impl, th=theta0, Zf=Zf, width=width, din=din:
                    impl.mlp_forward(th, Zf, din, width, d)))
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--quick", action="store_true")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    print(f"{'kernel':42s} {'numpy [ms]':>11s} {'numba [ms]':>11s} {'speedup':>8s} {'max rel diff':>13s}")
    for name, fn in cases(args.quick):
        t_np = best_of(lambda: fn(numpy_impl), args.repeat)
        t_nb = best_of(lambda: fn(numba_impl), args.repeat)
        a, b = fn(numpy_impl), fn(numba_impl)
        diff = max(max_rel_diff(x, y) for x, y in zip(a, b)) if isinstance(a, tuple) \
            else max_rel_diff(a, b)
        print(f"{name:42s} {1e3 * t_np:11.2f} {1e3 * t_nb:11.2f} {t_np / t_nb:8.2f} {diff:13.2e}")


if __name__ == "__main__":
    main()
