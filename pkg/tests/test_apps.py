import numpy as np
import pytest

from adpdd.apps import (
    SvmData,
    SvmError,
    SvmState,
    accuracy,
    box_lsq_experiment,
    build_box_constrained_lsq,
    build_distributed_lsq,
    build_example1,
    build_example2,
    build_svm,
    centralized_kkt,
    hinge,
    load_svm_csv,
    lsq_experiment,
    simulate_svm,
    svm_rhs,
    toy_data,
)
from adpdd.apps.lsq import split_rows
from adpdd.graph import path_graph, ring_graph
from adpdd.oracle import solve_consensus_unconstrained, solve_constrained, solve_least_squares
from adpdd.problem import ProblemError, constraint_eval, objective_value


def test_single_agent_lsq_is_centralized(rng):
    A, b = rng.standard_normal((12, 3)), rng.standard_normal(12)
    p = build_distributed_lsq(A, b, 1)
    assert np.allclose(solve_consensus_unconstrained(p), solve_least_squares(A, b))
    assert objective_value(p, np.zeros((1, 3))) == pytest.approx(0.5 * b @ b)


def test_lsq_one_row_per_agent_is_semidefinite(rng):
    A, b = rng.standard_normal((4, 3)), rng.standard_normal(4)
    p = build_distributed_lsq(A, b, 4, ring_graph(4))
    assert np.allclose(solve_consensus_unconstrained(p), solve_least_squares(A, b))
    with pytest.raises(ProblemError):
        build_distributed_lsq(A, b, 3)


def test_row_splits():
    assert split_rows(10, 2) == [5, 5]
    assert split_rows(10, 3, [2, 3, 5]) == [2, 3, 5]
    for rows in ([2, 3, 4], [0, 5, 5], [5, 5]):
        with pytest.raises(ProblemError):
            split_rows(10, 3, rows)


def test_box_constraint_form(rng):
    A, b = rng.standard_normal((6, 2)), rng.standard_normal(6)
    p = build_box_constrained_lsq(A, b, -1.0, 1.0, 2)
    assert p.m == 4
    x = np.array([[0.5, -2.0], [1.0, 0.0]])
    vals, _ = constraint_eval(p, x)
    assert np.allclose(vals, x.ravel() ** 2 - 1.0)
    p = build_box_constrained_lsq(A, b, [0.0, -1.0], [2.0, 3.0], 2)
    vals, _ = constraint_eval(p, np.zeros((2, 2)))
    assert np.allclose(vals, [0.0, -3.0, 0.0, -3.0])
    with pytest.raises(ProblemError):
        build_box_constrained_lsq(A, b, 1.0, 1.0, 2)


def test_box_containing_optimum_leaves_duals_at_zero(rng):
    A, b = rng.standard_normal((8, 2)), rng.standard_normal(8)
    z = solve_least_squares(A, b)
    r = np.abs(z).max() + 1.0
    x, th = solve_constrained(build_box_constrained_lsq(A, b, -r, r, 2))
    assert np.allclose(x[0], z, atol=1e-8)
    assert np.allclose(th, 0.0)


def test_lsq_experiment_defaults():
    exp = lsq_experiment(0)
    assert exp.problem.n == 4 and exp.problem.l == 80 and exp.graph.n_edges == 4
    assert not exp.x0.any()
    assert lsq_experiment(0, random_start=True).x0.any()
    assert np.array_equal(lsq_experiment(3).meta["A"], lsq_experiment(3).meta["A"])
    assert box_lsq_experiment(0).problem.m == 16


def test_example1_constraint_value():
    p, _ = build_example1()
    vals, _ = constraint_eval(p, np.tile([1.4099, 0.8966], (3, 1)))
    assert vals[0] == pytest.approx(6 * 1.4099 ** 2 + 3 * 0.8966 ** 2 - 11)
    assert vals[0] == pytest.approx(3.3386, abs=1e-3)


def test_example2_optimum_is_weighted_mean():
    p, g, c = build_example2(7)
    h = np.array([f.P[0, 0] for f in p.objectives])
    assert solve_consensus_unconstrained(p)[0] == pytest.approx(h @ c / h.sum())
    assert g.n == 10 and np.all(g.gains == 0.001)
    assert np.all((c >= 0) & (c <= 10))


def _toy():
    return build_svm(toy_data(), path_graph(2))


def test_svm_data_validation():
    with pytest.raises(SvmError):
        SvmData([(np.ones((1, 2)), [0.5])])
    with pytest.raises(SvmError):
        SvmData([(np.ones((1, 2)), [1.0]), (np.ones((1, 3)), [1.0])])
    with pytest.raises(SvmError):
        SvmData([(np.zeros((0, 2)), [])])
    with pytest.raises(SvmError):
        build_svm(toy_data(), path_graph(3))


def test_svm_rhs_at_zero():
    b = _toy()
    s = SvmState.zeros(b)
    assert np.allclose(hinge(s, b), 1.0)
    d = svm_rhs(s, b)
    # zero duals: slack pushed down but held at the boundary, hinge gates open
    assert np.all(d.xi == 0.0)
    assert np.allclose(d.theta, 1.0)
    assert np.all(d.mu_dual == 0.0) and np.all(d.weights == 0.0)


def test_svm_slack_rate_with_hinge_dual():
    b = _toy()
    s = SvmState.zeros(b)
    s.xi[:] = 1.0
    s.theta[:] = 2.0
    d = svm_rhs(s, b)
    assert np.allclose(d.xi, -b.penalty + 2.0)
    assert np.allclose(d.mu_dual, 1.0)


def test_svm_centralized_point_is_stationary():
    b = _toy()
    s = centralized_kkt(b)
    assert np.allclose(s.w, [0.5, 0.0]) and np.allclose(s.b, 0.0)
    assert np.allclose(s.theta, [0.25, 0.25, 0.0, 0.0])
    assert np.max(np.abs(svm_rhs(s, b, adaptive=False).pack())) < 1e-9


def test_svm_flow_classifies_toy():
    b = _toy()
    final, rec = simulate_svm(b, dt=5e-3, t_end=20.0)
    assert accuracy(final, b) == 1.0
    assert np.allclose(final.w, [0.5, 0.0], atol=0.05)
    assert np.all(rec["theta"] >= 0) and np.all(rec["xi"] >= 0) and np.all(rec["mu_dual"] >= 0)
    assert np.all(np.diff(rec["weights"], axis=0) >= 0)


def test_svm_centralized_ignores_partition():
    X = np.array([[2.0, 0.0], [-2.0, 0.0], [2.0, 1.0], [-2.0, -1.0]])
    y = np.array([1.0, -1.0, 1.0, -1.0])
    three = build_svm(SvmData([(X[:1], y[:1]), (X[1:3], y[1:3]), (X[3:], y[3:])]), path_graph(3))
    s = centralized_kkt(three)
    assert np.max(np.abs(svm_rhs(s, three, adaptive=False).pack())) < 1e-9
    assert accuracy(s, three) == 1.0


def test_load_svm_csv(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("# label,x1,x2\n1,2,0\n-1,-2,0\n1,2,1\n-1,-2,-1\n")
    data = load_svm_csv(path, n_nodes=2)
    assert data.n == 2 and data.dim == 2
    assert np.array_equal(data.partitions[0][1], [1.0, 1.0])
    part = tmp_path / "p.txt"
    part.write_text("0 0 1 1\n")
    data = load_svm_csv(path, partition_path=part)
    assert np.array_equal(data.partitions[1][0], [[2.0, 1.0], [-2.0, -1.0]])
    with pytest.raises(SvmError):
        load_svm_csv(path)
    bad = tmp_path / "bad.csv"
    bad.write_text("1,a\n")
    with pytest.raises(SvmError, match="bad.csv:1"):
        load_svm_csv(bad, n_nodes=1)
