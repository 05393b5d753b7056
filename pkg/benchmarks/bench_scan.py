#!/usr/bin/env python3
"""Benchmark the compiled scan kernel against the pure-numpy fallback.

The recurrence h[l] = a[l] h[l-1] + u[l] is the only inherently sequential
loop in the package; everything else is vectorised numpy. Both backends
produce bit-identical output, so this is purely a speed comparison.

Run: python benchmarks/bench_scan.py
"""

import time

import numpy as np

from mvring import _kernel
from mvring._kernel import linrec_python
from mvring.scan import SsmParams, selective_scan, selective_scan_sequential
from mvring.tensor import Tape, Tensor


def timeit(fn, repeats=5):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def linrec_compiled(a, u):
    out = np.empty_like(u)
    _kernel._compiled.linrec_f64(a, u, np.zeros_like(u[0]), out)
    return out


def bench_kernel():
    print("linear recurrence kernel, float64")
    print(f"{'L':>6} {'M':>5} {'python':>10} {'compiled':>10} {'speedup':>8}")
    rng = np.random.default_rng(0)
    for L, M in ((256, 16), (768, 48), (1024, 64), (4096, 64), (16384, 128)):
        a = rng.uniform(0.0, 1.0, (L, M))
        u = rng.standard_normal((L, M))
        t_py = timeit(lambda: linrec_python(a, u))
        if _kernel._compiled is None:
            print(f"{L:>6} {M:>5} {t_py * 1e3:>9.2f}ms {'n/a':>10} {'n/a':>8}")
            continue
        t_c = timeit(lambda: linrec_compiled(a, u))
        assert np.array_equal(linrec_python(a, u), linrec_compiled(a, u)), \
            "backends disagree"
        print(f"{L:>6} {M:>5} {t_py * 1e3:>9.2f}ms {t_c * 1e3:>9.2f}ms "
              f"{t_py / t_c:>7.1f}x")


def bench_selective_scan():
    print("\nselective scan end to end (production vs sequential reference)")
    print(f"{'L':>6} {'D':>4} {'N':>3} {'reference':>10} {'production':>11}")
    rng = np.random.default_rng(1)
    tape = Tape(0)
    params = SsmParams.init(tape, "s", 16, 4, out_scale=1.0)
    for L in (256, 768, 2048):
        x = Tensor(rng.standard_normal((L, 16)))
        t_seq = timeit(lambda: selective_scan_sequential(x, params), repeats=3)
        t_par = timeit(lambda: selective_scan(x, params, chunk=64), repeats=3)
        print(f"{L:>6} {16:>4} {4:>3} {t_seq * 1e3:>9.2f}ms {t_par * 1e3:>10.2f}ms")


if __name__ == "__main__":
    print(f"active backend: {_kernel.backend_name()}\n")
    bench_kernel()
    bench_selective_scan()
