import math
from dataclasses import replace

import numpy as np
import pytest

from adpdd.apps import example1_experiment
from adpdd.diagnostics import (
    CheckReport,
    DiagnosticsError,
    compare_convergence,
    frozen_dual_decay,
    kkt_residual,
    report_json,
    resolve_a_star,
    slack,
    storage_snapshot,
    time_to_tolerance,
    verify_decay_envelope,
    verify_invariants,
    verify_lambda2_ordering,
    verify_lambda2_ratio,
    verify_lyapunov_decrease,
    verify_passivity,
)
from adpdd.dynamics import Derivatives, SimConfig, SystemState, derivatives, simulate
from adpdd.graph import build_graph, connectivity, path_graph
from adpdd.oracle import consensus_dual, solve_constrained
from adpdd.problem import Constraint, QuadraticFunction, build_problem, hessian_lambda_min

from conftest import two_agent_problem


def _derivs(dx, dalpha=None, dtheta=(), active=()):
    dx = np.asarray(dx, float)
    return Derivatives(dx, np.zeros_like(dx) if dalpha is None else np.asarray(dalpha, float),
                       np.asarray(dtheta, float), np.zeros(1), np.asarray(active, bool))


def test_slack_and_a_star():
    assert slack(1e-4, 2.0) == pytest.approx(3e-3)
    assert resolve_a_star(3.0) == 3.0
    assert resolve_a_star("auto", np.array([1.0, 7.5])) == 7.5
    assert resolve_a_star("auto", np.array([1.0, 1.5])) == 2.0
    for bad in (1.0, 0.5, "max"):
        with pytest.raises(DiagnosticsError):
            resolve_a_star(bad)


def test_storage_equilibrium_is_zero():
    p = two_agent_problem()
    g = path_graph(2)
    s = SystemState(np.full((2, 1), 2.0), np.zeros((2, 1)), np.zeros(0), np.array([2.0]))
    snap = storage_snapshot(s, _derivs(np.zeros((2, 1))), p, g, a_star=2.0)
    assert (snap.v_h1, snap.v_h2, snap.v_h3, snap.w, snap.v_total) == (0, 0, 0, 0, 0)


def test_storage_definitions():
    p = build_problem([QuadraticFunction(np.eye(2), [0, 0], 0)] * 2)
    g = path_graph(2)
    s = SystemState(np.zeros((2, 2)), np.zeros((2, 2)), np.zeros(0), np.array([2.0]))
    snap = storage_snapshot(s, _derivs([[1.0, 0.0], [0.0, 0.0]]), p, g, a_star=2.0)
    assert snap.v_h1 == pytest.approx(0.5)
    # weight storage 1/2 (a - a*)^2 / d with d = 1
    s.weights[:] = 5.0
    assert storage_snapshot(s, _derivs(np.zeros((2, 2))), p, g, a_star=2.0).w == pytest.approx(4.5)
    # the frozen baseline has no weight storage
    assert storage_snapshot(s, _derivs(np.zeros((2, 2))), p, g, adaptive=False).w == 0.0
    with pytest.raises(DiagnosticsError):
        storage_snapshot(s, _derivs(np.zeros((2, 2))), p, g, a_star=1.0)


def test_v_h3_counts_open_gates_only():
    p = build_problem([QuadraticFunction([[2.0]], [0.0], 0.0)] * 2,
                      [Constraint.scalar(0, 0, 1.0, 0.0, -1.0, 1), Constraint.scalar(1, 0, 1.0, 0.0, -1.0, 1)])
    s = SystemState(np.zeros((2, 1)), np.zeros((2, 1)), np.array([0.5, 0.0]), np.array([1.0]))
    snap = storage_snapshot(s, _derivs(np.zeros((2, 1)), dtheta=[-2.0, 3.0], active=[True, False]), p,
                            path_graph(2))
    assert snap.v_h3 == pytest.approx(2.0)


def test_v_bar_at_saddle_is_weight_storage_only():
    exp = example1_experiment(0)
    p, g = exp.problem, exp.graph
    xs, th = solve_constrained(p)
    al = consensus_dual(p, g, xs, th)
    s = SystemState(xs, al, th, np.array([3.0, 3.0]))
    snap = storage_snapshot(s, derivatives(s, p, g), p, g, a_star=2.0, reference=(xs, al, th))
    assert snap.v_bar == pytest.approx(snap.w)
    assert snap.w == pytest.approx(2 * 0.5 * 1.0 / 0.1)


def test_kkt_residual_cases():
    p = two_agent_problem()
    g = path_graph(2)
    xs, th = solve_constrained(p)
    assert np.allclose(xs, 2.0)
    al = consensus_dual(p, g, xs, th)
    r = kkt_residual(SystemState(xs, al, th, g.weights), p, g)
    assert r.max_residual < 1e-9
    r = kkt_residual(SystemState(np.array([[2.0], [2.5]]), al, th, g.weights), p, g)
    assert r.consensus == pytest.approx(0.5)
    # theta = 1 on g = x^2 - 1 at x = sqrt(0.8): g = -0.2
    pc = build_problem([QuadraticFunction([[2.0]], [0.0], 0.0)] * 2, [Constraint.scalar(0, 0, 1.0, 0.0, -1.0, 1)])
    x = np.full((2, 1), math.sqrt(0.8))
    r = kkt_residual(SystemState(x, np.zeros((2, 1)), np.array([1.0]), g.weights), pc, g)
    assert r.complementarity == pytest.approx(0.2)
    assert r.feasibility == 0.0 and r.dual_feasibility == 0.0


def _run(exp, **kw):
    cfg = SimConfig(**{"dt": 1e-4, "t_end": 2.0, "record_every": 20, "tol": 0.0, **kw})
    return simulate(exp.problem, exp.graph, exp.x0, cfg)


def test_constant_trajectory_passes_every_check():
    p, g = two_agent_problem(), path_graph(2)
    xs, th = solve_constrained(p)
    al = consensus_dual(p, g, xs, th)
    tr = simulate(p, g, xs, SimConfig(dt=1e-3, t_end=0.1, record_every=1, tol=0), alpha0=al)
    for which in ("H1", "H2", "H3"):
        rep = verify_passivity(tr, which)
        assert rep.passed
        assert abs(rep.details["storage_change"]) < 1e-12
        assert abs(rep.details["supply_integral"]) < 1e-12
    rep = verify_lyapunov_decrease(tr)
    assert rep.passed and rep.details["max_increment"] <= 1e-12


def test_passivity_h2_h3_on_example1():
    tr = _run(example1_experiment(0))
    for which in ("H2", "H3"):
        rep = verify_passivity(tr, which)
        assert rep.passed, rep.to_dict()


def test_passivity_gap_shrinks_with_dt():
    # storage change minus trapezoidal supply is a quadrature error, O(dt^2)
    exp = example1_experiment(0)
    gaps = []
    for dt in (4e-4, 2e-4, 1e-4):
        cfg = SimConfig(dt=dt, t_end=1.0, record_every=int(round(4e-4 / dt)), tol=0)
        tr = simulate(exp.problem, exp.graph, exp.x0, cfg)
        gaps.append(abs(float(np.max(tr.storage["v_h2"] - tr.storage["v_h2"][0] - tr.ports[:, 1]))))
    assert gaps[2] < 0.5 * gaps[1] < 0.25 * gaps[0] + 1e-15


def test_passivity_needs_records():
    exp = example1_experiment(0)
    tr = simulate(exp.problem, exp.graph, exp.x0, SimConfig(dt=1e-4, t_end=2e-4, record_every=100, tol=0))
    with pytest.raises(DiagnosticsError):
        verify_passivity(tr, "H2")


def test_lyapunov_with_frozen_and_auto_reference():
    exp = example1_experiment(0)
    # frozen weights carry no weight storage, any a* is irrelevant
    assert verify_lyapunov_decrease(_run(exp, adaptive=False)).passed
    adapt = _run(exp)
    auto = verify_lyapunov_decrease(adapt, a_star="auto")
    assert auto.details["a_star"] == pytest.approx(adapt.weights.max())
    assert auto.passed


def test_lambda2_checks_on_run():
    tr = _run(example1_experiment(0))
    assert verify_lambda2_ordering(tr).passed
    assert verify_lambda2_ratio(tr).passed
    assert verify_invariants(tr).passed
    # live rate constant exceeds the one from L0 once lambda2 has grown
    lam_m = 2 * (tr.hessian_min + tr.lambda2)
    lam_m0 = 2 * (tr.hessian_min + tr.lambda2_initial)
    grown = tr.lambda2 > tr.lambda2_initial
    assert np.all(lam_m[grown] > lam_m0)


def test_time_to_tolerance():
    t = np.arange(5.0)
    assert time_to_tolerance(t, [5, 1, 0.1, 2, 0.01], 0.5) == 4.0
    assert time_to_tolerance(t, [0.1] * 5, 0.5) == 0.0
    assert time_to_tolerance(t, [1] * 5, 0.5) == math.inf


def test_compare_two_agent_and_zero_gain():
    p = two_agent_problem()
    x0 = np.array([[0.3], [-0.4]])
    cfg = SimConfig(dt=1e-3, t_end=20, record_every=10, tol=0)
    res = compare_convergence(p, path_graph(2, gains=0.5), x0, cfg, x_star=[2.0], tol=1e-6)
    assert res["passed"]
    assert res["runs"]["adaptive"]["time_consensus"] <= res["runs"]["baseline"]["time_consensus"]
    zero = compare_convergence(p, path_graph(2).with_gains(0.0), x0, cfg, tol=1e-6)
    assert zero["identical"]


def test_decay_envelope_disagreement_start():
    # a start whose mean sits at the optimum only excites disagreement modes
    p, g = two_agent_problem(), path_graph(2)
    xs, th = solve_constrained(p)
    al = consensus_dual(p, g, xs, th)
    t, nrm, _ = frozen_dual_decay(p, g, np.array([1.0, 3.0]), al, dt=1e-3, t_end=3.0, adaptive=False)
    rep = verify_decay_envelope(t, nrm, hessian_lambda_min(p), connectivity(g)[0])
    assert rep.passed
    assert rep.details["observed_rate"] == pytest.approx(2.0 + 2.0, rel=1e-4)


def test_decay_envelope_rejects_constraints():
    exp = example1_experiment(0)
    with pytest.raises(DiagnosticsError):
        frozen_dual_decay(exp.problem, exp.graph, exp.x0, np.zeros((3, 2)))


def test_report_json_roundtrip():
    rep = CheckReport("demo", True, -0.5, 1.0, {"slack": 1e-3}, {"x": np.float64(2.0), "n": np.int64(3)})
    text = report_json([rep, {"inf": math.inf}])
    assert '"demo"' in text and '"inf"' in text
    assert rep.to_dict()["details"]["n"] == 3


def test_equal_weights_ratio_bound_is_tight():
    # uniformly scaled weights keep lambda2 / lambda_n fixed: the ratio bound holds with equality
    g = build_graph(4, [(0, 1), (1, 2), (2, 3), (0, 3)])
    lam2_0, lamn_0 = connectivity(g)
    lam2, lamn = connectivity(g, 3.0 * g.weights)
    assert lam2 == pytest.approx(lamn / lamn_0 * lam2_0, rel=1e-12)
