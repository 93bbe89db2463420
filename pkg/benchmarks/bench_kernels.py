"""Timing comparison of the two MOS stamping backends.

Runs the same work through the numba kernel and the pure-numpy fallback:
a butterfly sweep of the default 6T cell (the dominant real workload) and
a raw mos_stamp loop over a synthetic device batch.  Each case is warmed
once per backend so numba's compile time stays out of the numbers, then
timed best-of-N.

Usage: python3 benchmarks/bench_kernels.py [--grid 0.005] [--repeat 3]
"""

import argparse
import time

import numpy as np

from sramlab.devices import TechnologyParams, derive_tech_params
from sramlab.genlib import build_6t_cell
from sramlab.kernels import HAVE_NUMBA, mos_stamp, pack_device, set_backend
from sramlab.stability import butterfly


def best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def butterfly_case(grid):
    cell = build_6t_cell()
    tech = derive_tech_params(TechnologyParams.default())
    return lambda: butterfly(cell, tech, "hold", 1.8, grid)


def stamp_case(n_dev, iters, seed=7):
    rng = np.random.default_rng(seed)
    tech = derive_tech_params(TechnologyParams.default())
    vt = tech.v_t
    rows = []
    for k in range(n_dev):
        polarity = "NMOS" if k % 2 == 0 else "PMOS"
        dev = tech.nmos if polarity == "NMOS" else tech.pmos
        rows.append(
            pack_device(
                dev,
                polarity,
                rng.uniform(2e-6, 12e-6),
                rng.uniform(1e-6, 3e-6),
                vt,
            )
        )
    par = np.vstack(rows)
    n_nodes = 64
    # Trailing slot of the state vector is the grounded terminal.
    idx = rng.integers(0, n_nodes + 1, size=(n_dev, 4))
    x_ext = np.append(rng.uniform(0.0, 1.8, n_nodes), 0.0)
    jac = np.zeros((n_nodes + 1, n_nodes + 1))
    res = np.zeros(n_nodes + 1)

    def work():
        for _ in range(iters):
            jac[:] = 0.0
            res[:] = 0.0
            mos_stamp(x_ext, idx, par, vt, jac, res)

    return work


def run_case(label, work, backends, repeat):
    print(label)
    times = {}
    for backend in backends:
        set_backend(backend)
        work()  # warm: JIT compile and touch caches
        times[backend] = best_of(work, repeat)
    for backend in backends:
        note = ""
        if backend != "numpy" and times["numpy"] > 0:
            note = f"   ({times['numpy'] / times[backend]:.1f}x vs numpy)"
        print(f"  {backend:<6} {times[backend] * 1e3:9.1f} ms{note}")


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--grid", type=float, default=5e-3, help="butterfly sweep step in volts")
    parser.add_argument("--repeat", type=int, default=3, help="timed runs per backend; best wins")
    parser.add_argument("--devices", type=int, default=4096, help="synthetic batch size")
    parser.add_argument("--iters", type=int, default=200, help="stamp calls per timed run")
    args = parser.parse_args(argv)

    backends = ["numpy"] + (["numba"] if HAVE_NUMBA else [])
    if len(backends) == 1:
        print("numba is not importable; timing the numpy fallback only")
    try:
        run_case(f"butterfly hold sweep, grid {args.grid * 1e3:g} mV", butterfly_case(args.grid), backends, args.repeat)
        run_case(
            f"mos_stamp batch, {args.devices} devices x {args.iters} calls",
            stamp_case(args.devices, args.iters),
            backends,
            args.repeat,
        )
    finally:
        set_backend(None)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
