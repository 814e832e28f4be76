"""Time the compiled and pure-Python kernels on the same workloads.

    python3 benchmarks/bench_kernels.py [--n 2049] [--spp 512] [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from evoshift import kernels
from evoshift.discretization import build_grid
from evoshift.model import QuadraticRateParams, quadratic_model
from evoshift.pde import Propagator, default_initial_density


def workloads(prop, u0):
    spp = prop.steps_per_period

    def linear():
        prop.sweep_linear(prop.to_working(u0), 0, spp)

    def nonlocal_():
        prop.sweep_nonlocal(prop.to_working(u0), 0, spp, np.empty(spp))

    return {"linear period": linear, "nonlocal period": nonlocal_}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=2049)
    ap.add_argument("--spp", type=int, default=512)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    model = quadratic_model(QuadraticRateParams(
        r=2.0, g=lambda t: np.ones_like(np.asarray(t, dtype=float)),
        theta=lambda t: np.sin(2 * np.pi * np.asarray(t, dtype=float))))
    grid = build_grid(6.0, args.n)
    u0 = default_initial_density(grid, 0.0, 0.1)

    names = ["python"] + (["compiled"] if kernels.compiled_backend else [])
    timings = {}
    for name in names:
        prop = Propagator(model, 0.01, 0.1, grid, args.spp, backend=kernels.get_backend(name))
        for label, fn in workloads(prop, u0).items():
            fn()  # warm-up
            timings[(name, label)] = min(timeit.repeat(fn, number=1, repeat=args.repeat))

    print(f"n_points={args.n} steps_per_period={args.spp} (best of {args.repeat})")
    print(f"{'workload':<18}{'python [ms]':>14}{'compiled [ms]':>16}{'speed-up':>10}")
    for label in ("linear period", "nonlocal period"):
        py = timings[("python", label)]
        cy = timings.get(("compiled", label))
        extra = f"{cy * 1e3:>16.2f}{py / cy:>9.1f}x" if cy else f"{'n/a':>16}{'':>10}"
        print(f"{label:<18}{py * 1e3:>14.2f}{extra}")


if __name__ == "__main__":
    main()
