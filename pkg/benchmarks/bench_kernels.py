"""Compare the numba kernels with their numpy twins.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--quick]

Each kernel is timed on identical inputs for both backends (numba timings
exclude the first, compiling call) and the outputs are checked to agree.
An end-to-end rate_I timing under FEWJUMPS_DISABLE_NUMBA is run in a
subprocess for each setting of the flag.
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from fewjumps import _kernels_numba as nb
from fewjumps import _kernels_numpy as npk
from fewjumps.models import GaussPowerModel

E2E = """
import time, numpy as np
from fewjumps import models, ratefn, kernels
h = models.to_rate_handle(models.GaussPowerModel(np.array([[1, .5, .2], [.5, 1, .3], [.2, .3, 1.]]), 3))
t0 = time.perf_counter()
ratefn.rate_I_many(h, np.array([[1., 2., .5], [2., 1., 1.]]))
print(kernels.BACKEND, time.perf_counter() - t0)
"""


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(quick):
    rng = np.random.default_rng(0)
    n = 20_000 if quick else 200_000
    batch = rng.standard_normal((n, 3))
    yield "orthant_hits", (batch, np.array([0.5, 0.5, 0.5])), {}

    x = rng.random((n // 10, 6))
    yield "project_simplex_rows", (x,), {}

    m = GaussPowerModel(np.array([[1, .5, .2, .1], [.5, 1, .3, .2], [.2, .3, 1, .4],
                                  [.1, .2, .4, 1.]]), 3)
    y = rng.random((n // 20, 4))
    yield "signed_quadform_min", (y, m.Sigma_pinv, m.range_projector, m._signs, 1e-8), {}

    p, s, mk = m._faces
    yield "face_qp_min", (y[: n // 100], m.Sigma, p, s, mk, True), {}

    g = 60 if quick else 200
    jg = np.sqrt(np.add.outer(np.arange(g + 1.0), np.arange(g + 1.0)))
    yield "oracle_min[k=2]", (jg, 2, g), {}

    g3 = 8 if quick else 14
    idx = np.arange(g3 + 1.0)
    j3 = np.cbrt(idx[:, None, None] + idx[None, :, None] + idx[None, None, :])
    yield "oracle_min[k=3]", (j3, 3, g3), {}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--quick", action="store_true")
    args = ap.parse_args()

    print(f"{'kernel':24s} {'numpy [s]':>12s} {'numba [s]':>12s} {'speedup':>9s}")
    for name, call_args, kw in cases(args.quick):
        fname = name.split("[")[0]
        f_np, f_nb = getattr(npk, fname), getattr(nb, fname)
        out_np, out_nb = f_np(*call_args), f_nb(*call_args)
        pairs = zip(out_np, out_nb) if isinstance(out_np, tuple) else [(out_np, out_nb)]
        for a, b in pairs:
            np.testing.assert_allclose(np.asarray(a, dtype=float), np.asarray(b, dtype=float),
                                       rtol=1e-10, atol=1e-12)
        t_np = best_of(lambda: f_np(*call_args), args.repeat)
        t_nb = best_of(lambda: f_nb(*call_args), args.repeat)
        print(f"{name:24s} {t_np:12.5f} {t_nb:12.5f} {t_np / t_nb:9.1f}x")

    print("\nend-to-end rate_I (2 targets, k=3):")
    for flag in ("1", "0"):
        env = dict(os.environ, FEWJUMPS_DISABLE_NUMBA=flag)
        res = subprocess.run([sys.executable, "-c", E2E], env=env, capture_output=True, text=True)
        print("  " + (res.stdout.strip() or res.stderr.strip().splitlines()[-1]))


if __name__ == "__main__":
    main()
