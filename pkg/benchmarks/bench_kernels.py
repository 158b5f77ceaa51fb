"""Wall time of the kinetic step with the compiled and numpy kernels.

    python benchmarks/bench_kernels.py [--grid 64x256] [--steps 50] [--threads 1 4]

Also checks that every backend/thread combination returns the same bits.
"""
import argparse
import time

import numpy as np

from inertial_kuramoto import FrequencyDistribution, ModelParams, PhaseSpaceGrid
from inertial_kuramoto import _backend, kinetic


def bench(grid, state, backend, threads, steps, repeat):
    solver = kinetic.KineticSolver(grid, threads=threads, backend=backend)
    dt = solver.auto_dt()
    F = solver.step(state.F, dt)  # warm up, factor the tridiagonal
    best = float("inf")
    for _ in range(repeat):
        F = state.F
        t0 = time.perf_counter()
        for _ in range(steps):
            F = solver.step(F, dt)
        best = min(best, time.perf_counter() - t0)
    return best / steps, F


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--grid", default="64x256")
    ap.add_argument("--nu-nodes", type=int, default=1)
    ap.add_argument("--steps", type=int, default=50)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--threads", type=int, nargs="+", default=[1, 4])
    args = ap.parse_args(argv)
    nt, nw = (int(x) for x in args.grid.lower().split("x"))
    g = (FrequencyDistribution.dirac() if args.nu_nodes == 1
         else FrequencyDistribution.gaussian(0.0, 0.5, args.nu_nodes))
    grid = PhaseSpaceGrid(nt, nw, ModelParams(1.0, 1.0, 1.0), g)
    state, _ = kinetic.init_from_profile(grid, {"kind": "maxwellian-bump", "amplitude": 0.3,
                                                "shift": 0.2})
    print(f"grid {grid.n_nu}x{nt}x{nw}, {args.steps} steps, best of {args.repeat}")
    print(f"{'backend':>8} {'threads':>7} {'ms/step':>9} {'speedup':>8}")
    ref_time = ref_F = None
    for backend in reversed(_backend.available_backends()):  # python first
        for threads in args.threads:
            per, F = bench(grid, state, backend, threads, args.steps, args.repeat)
            if ref_time is None:
                ref_time, ref_F = per, F
            same = "" if np.array_equal(F, ref_F) else "  RESULT DIFFERS"
            print(f"{backend:>8} {threads:>7} {1e3 * per:9.3f} {ref_time / per:8.2f}x{same}")


if __name__ == "__main__":
    main()
