"""Per-step cost of the banded RK4 stepper: numba kernels vs pure numpy.

Times integrate() on the builtin scenarios' systems over a few hundred
fixed-dt steps for each backend and prints ms/step and the speedup.  The
numba kernels are cached on disk, but a warmup run still precedes the
timed one so a cold cache never lands in the numbers.

    python3 benchmarks/bench_rhs.py [--steps N]
"""

import argparse
import time

import numpy as np

from kpo_anneal.evolve import IntegratorConfig, integrate, stability_dt
from kpo_anneal.experiments import builtin_scenarios, set_path
from kpo_anneal._kernels import USING_NUMBA


def bench_case(name, params, steps, backend):
    dt = stability_dt(params, params.schedule.readout_window[1])
    cfg = IntegratorConfig(dt=dt, backend=backend)
    times = np.array([0.0, steps * dt])

    # warmup (also triggers the jit compile on a cold cache)
    integrate(params, np.array([0.0, 2 * dt]), cfg)

    t0 = time.perf_counter()
    traj = integrate(params, times, cfg)
    wall = time.perf_counter() - t0
    per_step = 1e3 * wall / traj.diagnostics.steps
    print(f"  {name:24s} {backend:6s} D={int(np.prod(params.trunc.dims)):4d} "
          f"dt={dt * 1e9:5.2f} ns  {per_step:7.3f} ms/step")
    return per_step


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--steps", type=int, default=200,
                        help="timed steps per case (default 200)")
    args = parser.parse_args()

    scenarios = builtin_scenarios()
    lock = scenarios["lock-1kpo"].system
    corr = scenarios["corr-2kpo"].system
    cases = [
        ("lock-1kpo dim 30", lock),
        ("corr-2kpo dims (20,20)", set_path(corr, "trunc.dims", (20, 20))),
        ("corr-2kpo dims (30,30)", corr),
    ]

    backends = ["numpy"] + (["numba"] if USING_NUMBA else [])
    if not USING_NUMBA:
        print("numba unavailable or disabled; timing the numpy backend only")

    for name, params in cases:
        per = {b: bench_case(name, params, args.steps, b) for b in backends}
        if len(per) == 2:
            print(f"  {'':24s} numba is {per['numpy'] / per['numba']:.2f}x "
                  "faster here")


if __name__ == "__main__":
    main()
