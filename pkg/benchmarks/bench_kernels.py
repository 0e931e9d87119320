#!/usr/bin/env python3
"""Benchmark the numba kernels against their pure-numpy fallbacks.

Times each hot kernel on realistic shapes, checks both paths agree, and
prints per-kernel speedups.  The package-level selection is controlled by
the LATENTEDIT_NUMBA environment variable; this script calls both
implementations directly so a single run covers both backends.
"""

import time

import numpy as np

from latentedit import kernels
from latentedit._backend import HAS_NUMBA, NUMBA_ENABLED


def timeit(fn, *args, repeats=5, inner=1):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        for _ in range(inner):
            fn(*args)
        best = min(best, (time.perf_counter() - t0) / inner)
    return best


def bench_mixture_eps():
    rng = np.random.default_rng(0)
    K, d, n = 6, 512, 64
    z = np.ascontiguousarray(rng.normal(size=(n, d)))
    means = np.ascontiguousarray(rng.normal(size=(K, d)))
    variances = np.ascontiguousarray(rng.uniform(0.1, 1.0, size=(K, d)))
    logw = np.log(np.full(K, 1.0 / K))
    args = (z, 0.3, means, variances, logw)
    return "mixture_eps (64x512, K=6)", args


def bench_template_scores():
    rng = np.random.default_rng(1)
    bank = np.ascontiguousarray(rng.normal(size=(2028, 1024)))
    bank /= np.linalg.norm(bank, axis=1, keepdims=True)
    x = rng.normal(size=1024)
    x = np.ascontiguousarray(x / np.linalg.norm(x))
    return "template_scores (2028x1024)", (bank, x)


def bench_adam_update():
    rng = np.random.default_rng(2)
    n = 600_000
    return "adam_update (600k params)", (
        rng.normal(size=n),
        rng.normal(size=n),
        np.zeros(n),
        np.zeros(n) + 1e-4,
        1e-3,
        0.9,
        0.999,
        1e-8,
        10,
    )


def main():
    print(f"numba available: {HAS_NUMBA}; package default backend: "
          f"{'numba' if NUMBA_ENABLED else 'numpy'}")
    cases = [
        (bench_mixture_eps, "mixture_eps"),
        (bench_template_scores, "template_scores"),
        (bench_adam_update, "adam_update"),
    ]
    header = f"{'kernel':<28} {'numpy':>12} {'numba':>12} {'speedup':>9}"
    print(header)
    print("-" * len(header))
    for builder, name in cases:
        label, args = builder()
        np_fn = getattr(kernels, f"{name}_numpy")
        nb_fn = getattr(kernels, f"{name}_numba")
        # adam mutates its inputs: give every timing call fresh copies
        mutating = name == "adam_update"

        def call(fn, template=args):
            if mutating:
                fresh = tuple(a.copy() if isinstance(a, np.ndarray) else a for a in template)
                return fn(*fresh)
            return fn(*template)

        t_np = timeit(lambda: call(np_fn))
        if nb_fn is None:
            print(f"{label:<28} {t_np * 1e3:>10.3f}ms {'n/a':>12} {'n/a':>9}")
            continue
        call(nb_fn)  # compile outside the timing loop
        t_nb = timeit(lambda: call(nb_fn))
        if not mutating:
            ref, fast = call(np_fn), call(nb_fn)
            assert np.allclose(ref, fast, rtol=1e-9, atol=1e-12), f"{name}: backends disagree"
        print(f"{label:<28} {t_np * 1e3:>10.3f}ms {t_nb * 1e3:>10.3f}ms {t_np / t_nb:>8.1f}x")


if __name__ == "__main__":
    main()
