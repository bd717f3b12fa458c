"""Time the compiled and pure-Python propagation kernels against each other.

Two workloads are timed: a single truth trajectory (one row, many RK4
substeps) and a sigma-point batch (2n + 1 rows, one filter step), both on the
default sea state.

    python benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from vesselstate import kernels
from vesselstate.harness import initial_truth_state, spawn_rngs
from vesselstate.scenario import default_scenario


def workloads():
    sc = default_scenario()
    layout = sc.waves.layout()
    model = kernels.KernelModel.from_params(sc.vessel.to_params(), layout)
    x0 = initial_truth_state(sc, spawn_rngs(0)["phases"])[None, :]
    rng = np.random.default_rng(0)
    sigma = x0 + rng.normal(scale=1e-3, size=(2 * layout.dim + 1, layout.dim))
    return {
        "truth, 1 row x 1000 substeps": lambda b: kernels.rk4_batch(x0, sc.truth_dt, model, 1000, backend=b),
        f"sigma points, {sigma.shape[0]} rows x 10 substeps":
            lambda b: kernels.rk4_batch(sigma, sc.truth_dt, model, 10, backend=b),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    backends = sorted(kernels.BACKENDS)
    print(f"backends available: {', '.join(backends)}")
    for name, fn in workloads().items():
        best = {}
        for b in backends:
            fn(b)  # warm up
            timer = timeit.Timer(lambda: fn(b))
            n, _ = timer.autorange()
            best[b] = min(timer.repeat(args.repeat, n)) / n
        line = "  ".join(f"{b} {t * 1e3:9.3f} ms" for b, t in best.items())
        speedup = f"  speedup x{best['python'] / best['cython']:.1f}" if "cython" in best else ""
        print(f"{name:40s} {line}{speedup}")


if __name__ == "__main__":
    main()
