"""Command-line experiment runner.

``adpdd run --config exp.yaml`` simulates one experiment and writes
``trajectory.csv``, ``report.json`` and ``meta.json``; ``adpdd compare``
pairs adaptive and frozen-weight runs (plus an optional gain sweep) and
writes ``comparison.json``.

Exit codes: 0 converged, 1 config error, 2 horizon reached without
convergence, 3 divergence.
"""

import argparse
import math
import os
import platform
import sys

import numpy as np

from . import __version__
from ._backend import BACKEND
from .config import ConfigError, build_experiment, load_config, parse_config
from .diagnostics import (
    compare_convergence,
    kkt_residual,
    verify_invariants,
    verify_lambda2_ordering,
    verify_lambda2_ratio,
    verify_lyapunov_decrease,
    verify_passivity,
)
from .dynamics import DivergenceError, simulate
from .io import read_json, write_json, write_table_csv, write_trajectory_csv
from .kernels import NumericalError
from .oracle import solve_constrained, solve_least_squares
from .robustness import gain_experiment, gain_sweep

EXIT_CONVERGED = 0
EXIT_CONFIG = 1
EXIT_HORIZON = 2
EXIT_DIVERGED = 3

_STATUS_EXIT = {"converged": EXIT_CONVERGED, "horizon": EXIT_HORIZON, "diverged": EXIT_DIVERGED}


def _versions():
    import numba
    import yaml

    return {"adpdd": __version__, "numpy": np.__version__, "numba": numba.__version__,
            "pyyaml": yaml.__version__, "python": platform.python_version()}


def _meta(cfg, command):
    return {"command": command, "config": cfg.resolved(), "seed": cfg.seed, "backend": BACKEND,
            "versions": _versions()}


def _sim_a_star(cfg):
    return 2.0 if cfg.a_star == "auto" else cfg.a_star


def oracle_solution(exp):
    """Reference primal optimum (replicated ``(n, l)``) or ``None`` if unavailable."""
    try:
        if exp.name == "lsq":
            z = solve_least_squares(exp.meta["A"], exp.meta["b"])
            return np.tile(z, (exp.problem.n, 1))
        return solve_constrained(exp.problem)[0]
    except (NumericalError, np.linalg.LinAlgError):
        return None


def _checks(traj, cfg):
    reports = [verify_invariants(traj), verify_lambda2_ordering(traj), verify_lambda2_ratio(traj)]
    if len(traj) >= 3:
        reports += [verify_passivity(traj, w) for w in ("H1", "H2", "H3")]
    if len(traj) >= 2:
        reports.append(verify_lyapunov_decrease(traj, a_star=None if cfg.a_star != "auto" else "auto"))
    return [r.to_dict() for r in reports]


def _trajectory_report(traj, exp, cfg, x_star):
    p, g = exp.problem, exp.graph
    final = kkt_residual(traj.final, p, traj_graph(traj, g))
    out = {
        "status": traj.status,
        "t_final": traj.final.t,
        "records": len(traj),
        "final_kkt": {**final.__dict__, "max": final.max_residual},
        "lambda2": {"initial": traj.lambda2_initial, "terminal": float(traj.lambda2[-1]),
                    "lambda_n_initial": traj.lambda_n_initial, "lambda_n_terminal": float(traj.lambda_n[-1])},
        "final_weights": traj.final.weights,
        "checks": _checks(traj, cfg),
    }
    if x_star is not None:
        err = traj.final.x - x_star
        out["oracle"] = {"x_star": x_star[0], "max_abs_error": float(np.max(np.abs(err))),
                         "relative_error": float(np.linalg.norm(traj.final.x.mean(axis=0) - x_star[0])
                                                 / max(np.linalg.norm(x_star[0]), 1e-300))}
    return out


def traj_graph(traj, g):
    """Copy of ``g`` carrying the trajectory's final weights."""
    h = g.copy()
    h.weights[:] = traj.final.weights
    return h


def _load(args):
    path = args.config
    raw = None
    if path.endswith(".json"):
        try:
            raw = read_json(path)
        except (OSError, ValueError) as exc:
            raise ConfigError("<file>", str(exc)) from exc
    # a meta.json from an earlier run carries the fully resolved config
    if isinstance(raw, dict) and "config" in raw and "versions" in raw:
        cfg = parse_config(raw["config"])
    else:
        cfg = load_config(path)
    if args.seed is not None:
        cfg.seed = int(args.seed)
    if args.out is not None:
        cfg.outputs = args.out
    return cfg


def _outdir(cfg):
    try:
        os.makedirs(cfg.outputs, exist_ok=True)
    except OSError as exc:
        raise ConfigError("outputs", f"cannot create {cfg.outputs!r}: {exc}") from exc
    return cfg.outputs


def cmd_run(cfg):
    if cfg.kind == "svm":
        return _run_svm(cfg)
    exp = build_experiment(cfg)
    sim = cfg.sim_config()
    dist = cfg.disturbance_spec()
    out = _outdir(cfg)
    x_star = oracle_solution(exp)
    a_star = _sim_a_star(cfg)
    gain = None
    try:
        if dist is not None:
            rep, traj, _ = gain_experiment(exp.problem, exp.graph, exp.x0, sim, dist, a_star=a_star)
            gain = rep.to_dict()
        else:
            traj = simulate(exp.problem, exp.graph, exp.x0, sim, a_star=a_star)
    except DivergenceError as exc:
        if exc.trajectory is not None and len(exc.trajectory):
            write_trajectory_csv(exc.trajectory, os.path.join(out, "trajectory.csv"))
        write_json(os.path.join(out, "report.json"),
                   {"status": "diverged", "t_diverged": exc.t, "component": exc.component})
        write_json(os.path.join(out, "meta.json"), _meta(cfg, "run"))
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    write_trajectory_csv(traj, os.path.join(out, "trajectory.csv"))
    report = _trajectory_report(traj, exp, cfg, x_star)
    if gain is not None:
        report["gain"] = gain
    report["experiment"] = {"name": exp.name, "meta": {k: v for k, v in exp.meta.items() if k not in ("A", "b")}}
    write_json(os.path.join(out, "report.json"), report)
    write_json(os.path.join(out, "meta.json"), _meta(cfg, "run"))
    print(f"{exp.name}: {traj.status} at t={traj.final.t:.6g}, max KKT {report['final_kkt']['max']:.3g}")
    return _STATUS_EXIT[traj.status]


def sweep(exp, cfg, values):
    """Gain sweep table for ``compare`` (see :func:`adpdd.robustness.gain_sweep`)."""
    comp = cfg.compare
    sim = cfg.sim_config(**(comp.get("sweep_sim") or {}))
    dist = cfg.disturbance_spec(comp.get("sweep_disturbance"))
    rows, _, summary = gain_sweep(exp.problem, exp.graph, exp.x0, sim, values, dist,
                                  a_star=_sim_a_star(cfg), workers=comp.get("workers"))
    return {"sim": {"dt": sim.dt, "t_end": sim.t_end}, "members": rows, "summary": summary}


def cmd_compare(cfg):
    exp = build_experiment(cfg)
    sim = cfg.sim_config()
    out = _outdir(cfg)
    comp = cfg.compare
    tol = float(comp.get("tol", 1e-4))
    x_star = oracle_solution(exp) if comp.get("oracle", True) else None
    try:
        res = compare_convergence(exp.problem, exp.graph, exp.x0, sim,
                                  x_star=None if x_star is None else x_star[0], tol=tol,
                                  a_star=_sim_a_star(cfg))
    except DivergenceError as exc:
        write_json(os.path.join(out, "comparison.json"),
                   {"status": "diverged", "t_diverged": exc.t, "component": exc.component})
        write_json(os.path.join(out, "meta.json"), _meta(cfg, "compare"))
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    trajs = res.pop("trajectories")
    for label, tr in trajs.items():
        write_trajectory_csv(tr, os.path.join(out, f"trajectory_{label}.csv"))
    if comp.get("sweep"):
        res["sweep"] = sweep(exp, cfg, [float(v) for v in comp["sweep"]])
        if cfg.disturbance is not None or comp.get("sweep_disturbance"):
            m = res["sweep"]["members"]
            write_table_csv(os.path.join(out, "tradeoff.csv"),
                            ["gain", "lambda2_terminal", "bound", "empirical_gain"],
                            [[r["gain"], r.get("lambda2_terminal", math.nan), r.get("bound", math.nan),
                              r.get("empirical_gain", math.nan)] for r in m])
    write_json(os.path.join(out, "comparison.json"), res)
    write_json(os.path.join(out, "meta.json"), _meta(cfg, "compare"))
    ra = res["runs"]["adaptive"]
    rb = res["runs"]["baseline"]
    print(f"time to {tol:g} consensus: adaptive {ra['time_consensus']:.6g}, baseline {rb['time_consensus']:.6g}")
    return _STATUS_EXIT[ra["status"]]


def _run_svm(cfg):
    from .apps.svm import accuracy, build_svm, centralized_kkt, load_svm_csv, simulate_svm, svm_rhs, toy_data
    from .config import _graph_from_section
    from .graph import connectivity

    opts = dict(cfg.problem.get("options") or {})
    data_src = opts.pop("data", "toy")
    try:
        if data_src == "toy":
            data = toy_data()
        else:
            data = load_svm_csv(data_src, opts.pop("n_nodes", None), opts.pop("partition", None),
                                float(opts.pop("p_scale", 1.0)), float(opts.pop("C", 1.0)))
    except (OSError, ValueError) as exc:
        raise cfg.error("problem.options", str(exc)) from exc
    if data_src == "toy" and ("p_scale" in opts or "C" in opts):
        data = type(data)(data.partitions, float(opts.pop("p_scale", 1.0)), float(opts.pop("C", 1.0)))
    if opts:
        raise cfg.error("problem.options", f"unknown SVM options {sorted(opts)}")
    g = _graph_from_section(cfg.graph, data.n, cfg.seed)
    bundle = build_svm(data, g)
    sim = cfg.sim_config()
    out = _outdir(cfg)
    try:
        state, rec = simulate_svm(bundle, dt=sim.dt, t_end=sim.t_end, epsilon=sim.epsilon,
                                  adaptive=sim.adaptive, record_every=sim.record_every)
    except FloatingPointError as exc:
        write_json(os.path.join(out, "report.json"), {"status": "diverged", "message": str(exc)})
        write_json(os.path.join(out, "meta.json"), _meta(cfg, "run"))
        return EXIT_DIVERGED
    n, m, N, E = bundle.n, bundle.dim, bundle.n_samples, g.n_edges
    header = (["t"] + [f"w_{i}_{k}" for i in range(1, n + 1) for k in range(1, m + 1)]
              + [f"b_{i}" for i in range(1, n + 1)] + [f"xi_{j}" for j in range(1, N + 1)]
              + [f"theta_{j}" for j in range(1, N + 1)] + [f"mu_{j}" for j in range(1, N + 1)]
              + [f"w_edge{e}" for e in range(1, E + 1)])
    r = rec["t"].size
    table = np.hstack([rec["t"][:, None], rec["w"].reshape(r, -1), rec["b"], rec["xi"], rec["theta"],
                       rec["mu_dual"], rec["weights"]])
    write_table_csv(os.path.join(out, "trajectory.csv"), header, table)
    live = g.copy()
    live.weights[:] = state.weights
    resid = float(np.max(np.abs(svm_rhs(state, bundle, live, sim.epsilon, adaptive=False).pack()[:-E or None])))
    report = {"status": "converged" if resid < sim.tol else "horizon", "t_final": float(rec["t"][-1]),
              "stationarity_max": resid, "accuracy": accuracy(state, bundle),
              "classifier": {"w": state.w.mean(axis=0), "b": float(state.b.mean())},
              "lambda2_terminal": connectivity(g, state.weights)[0]}
    try:
        kkt = centralized_kkt(bundle)
        report["centralized"] = {"w": kkt.w[0], "b": float(kkt.b[0]),
                                 "w_error": float(np.max(np.abs(state.w - kkt.w)))}
    except NumericalError as exc:
        report["centralized"] = {"error": str(exc)}
    write_json(os.path.join(out, "report.json"), report)
    write_json(os.path.join(out, "meta.json"), _meta(cfg, "run"))
    print(f"svm: accuracy {report['accuracy']:.3f}, stationarity {resid:.3g}")
    return _STATUS_EXIT[report["status"]]


def build_parser():
    parser = argparse.ArgumentParser(prog="adpdd", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"adpdd {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (("run", "simulate one experiment"),
                           ("compare", "adaptive vs frozen-weight runs and optional gain sweep")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True, help="YAML config (or a meta.json from a previous run)")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--seed", type=int, help="root seed (overrides the config)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = _load(args)
        return cmd_run(cfg) if args.command == "run" else cmd_compare(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
