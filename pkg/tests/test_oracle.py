import numpy as np
import pytest
from hypothesis import given, strategies as st

from adpdd.apps import build_example1, build_example2
from adpdd.graph import laplacian, path_graph
from adpdd.kernels import NumericalError
from adpdd.oracle import (
    consensus_dual,
    reduced_kkt_residual,
    solve_consensus_unconstrained,
    solve_constrained,
    solve_least_squares,
    solve_linear_qp,
)
from adpdd.problem import Constraint, QuadraticFunction, build_problem, objective_gradient

from conftest import two_agent_problem


@given(st.integers(0, 10_000), st.integers(1, 6))
def test_least_squares_matches_numpy(seed, cols):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((cols + 5, cols))
    b = rng.standard_normal(cols + 5)
    z = solve_least_squares(A, b)
    assert np.allclose(z, np.linalg.lstsq(A, b, rcond=None)[0], atol=1e-9)


def test_least_squares_rank_deficient():
    A = np.ones((4, 2))
    with pytest.raises(NumericalError, match="condition"):
        solve_least_squares(A, np.arange(4.0))


def test_unconstrained_consensus():
    assert np.allclose(solve_consensus_unconstrained(two_agent_problem()), [2.0])
    p, _, c = build_example2(0)
    h = np.array([f.P[0, 0] for f in p.objectives])
    assert solve_consensus_unconstrained(p)[0] == pytest.approx(h @ c / h.sum(), rel=1e-12)
    with pytest.raises(ValueError):
        solve_consensus_unconstrained(build_example1()[0])


def test_one_dimensional_active_constraint():
    # sum f = 2 (z - 2)^2 with z^2 <= 1: z = 1, multiplier 4 / 2 = 2
    p = build_problem([QuadraticFunction([[2.0]], [-4.0], 4.0)] * 2, [Constraint.scalar(0, 0, 1.0, 0.0, -1.0, 1)])
    x, th = solve_constrained(p)
    assert np.allclose(x, 1.0, atol=1e-10)
    assert th == pytest.approx([2.0], abs=1e-9)


def test_inactive_constraint_has_zero_multiplier():
    p = build_problem([QuadraticFunction([[2.0]], [-1.0], 0.0)] * 2, [Constraint.scalar(1, 0, 1.0, 0.0, -1.0, 1)])
    x, th = solve_constrained(p)
    assert np.allclose(x, 0.5) and th[0] == 0.0


def test_example1_constrained_point():
    p, g = build_example1()
    x, th = solve_constrained(p)
    assert np.allclose(x, [0.98162552, 0.15221975], atol=1e-8)
    assert np.allclose(th, [0.0, 0.8256, 0.0], atol=1e-4)
    assert reduced_kkt_residual(p, x[0], th) < 1e-8
    # agent 2's ellipse is tight
    assert 7 * x[0, 0] ** 2 + 11 * x[0, 1] ** 2 == pytest.approx(7.0, abs=1e-9)


def test_consensus_dual_stationarity():
    p, g = build_example1()
    x, th = solve_constrained(p)
    alpha = consensus_dual(p, g, x, th)
    grad = objective_gradient(p, x)
    grad[1] += th[1] * np.array([14.0, 22.0]) * x[1]
    assert np.allclose(laplacian(g, 2) @ alpha.ravel(), -grad.ravel(), atol=1e-9)


def test_linear_qp_small():
    # min 1/2 |z|^2 - z1 - z2  s.t.  z1 + z2 <= 1
    z, lam = solve_linear_qp(np.eye(2), [-1.0, -1.0], [[1.0, 1.0]], [1.0])
    assert np.allclose(z, 0.5) and lam == pytest.approx([0.5])
    z, lam = solve_linear_qp(np.eye(2), [-0.1, -0.1], [[1.0, 1.0]], [1.0])
    assert np.allclose(z, 0.1) and lam == pytest.approx([0.0], abs=1e-12)
