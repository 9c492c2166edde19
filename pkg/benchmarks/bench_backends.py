"""Wall-clock comparison of the numba and numpy integrator backends.

Usage::

    python benchmarks/bench_backends.py [--repeat 3] [--steps 20000]

Each case is run once per backend to warm up (numba compilation), then
timed ``--repeat`` times.  The final states of the two backends are
compared so a speedup never hides a numerical discrepancy.
"""

import argparse
import time
from dataclasses import replace

import numpy as np

from adpdd._backend import HAVE_NUMBA
from adpdd.apps import example1_experiment, example2_experiment, lsq_experiment
from adpdd.dynamics import SimConfig, simulate


def _cases(steps):
    dt = 1e-4
    base = SimConfig(dt=dt, t_end=steps * dt, record_every=100, tol=0.0)
    yield "example1", example1_experiment(0), base
    yield "example2", example2_experiment(0, gains=0.01), base
    yield "lsq", lsq_experiment(0), replace(base, dt=1e-3, t_end=steps * 1e-3, record_every=10)


def _time(exp, cfg, backend, repeat):
    simulate(exp.problem, exp.graph, exp.x0, replace(cfg, t_end=10 * cfg.dt), backend=backend)
    best = float("inf")
    traj = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        traj = simulate(exp.problem, exp.graph, exp.x0, cfg, backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best, traj


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--steps", type=int, default=20000)
    args = ap.parse_args(argv)
    if not HAVE_NUMBA:
        raise SystemExit("numba is not installed")
    print(f"{'case':<10}{'steps':>8}{'numba s':>11}{'numpy s':>11}{'speedup':>9}{'max |dx|':>12}")
    for name, exp, cfg in _cases(args.steps):
        t_nb, tr_nb = _time(exp, cfg, "numba", args.repeat)
        t_np, tr_np = _time(exp, cfg, "numpy", args.repeat)
        diff = float(np.max(np.abs(tr_nb.final.x - tr_np.final.x)))
        print(f"{name:<10}{cfg.n_steps:>8}{t_nb:>11.4f}{t_np:>11.4f}{t_np / t_nb:>9.1f}{diff:>12.2e}")


if __name__ == "__main__":
    main()
