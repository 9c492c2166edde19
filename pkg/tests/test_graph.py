import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from adpdd.graph import (
    GraphError,
    build_graph,
    complete_graph,
    connectivity,
    eig_symmetric,
    incidence,
    is_connected,
    laplacian,
    path_graph,
    random_connected_graph,
    ring_graph,
)
from adpdd.kernels import NumericalError, jacobi_eigh


def test_build_normalises_edges():
    g = build_graph(3, [(1, 0), (2, 1)])
    assert g.edges.tolist() == [[0, 1], [1, 2]]
    assert np.all(g.weights == 1.0)


@pytest.mark.parametrize("edges, msg", [
    ([(0, 1), (1, 0)], "duplicate"),
    ([(0, 0), (0, 1)], "self"),
    ([(0, 1)], "disconnected"),
    ([(0, 5)], "outside"),
])
def test_build_rejects_bad_edges(edges, msg):
    with pytest.raises(GraphError, match=msg):
        build_graph(3, edges)


def test_weight_and_gain_validation():
    with pytest.raises(GraphError):
        build_graph(2, [(0, 1)], initial_weight=0.5)
    build_graph(2, [(0, 1)], initial_weight=0.5, allow_low_weight=True)
    with pytest.raises(GraphError):
        build_graph(2, [(0, 1)], gains=0.0)
    # zero gains are legal once the graph exists (frozen weights)
    assert path_graph(2).with_gains(0.0).gains.tolist() == [0.0]


def test_incidence_sign_convention():
    g = path_graph(3)
    B = incidence(g)
    assert B.tolist() == [[1, 0], [-1, 1], [0, -1]]


def test_laplacian_lift_and_weights():
    g = build_graph(3, [(0, 1), (1, 2)])
    w = np.array([2.0, 3.0])
    L = laplacian(g, 1, w)
    assert np.allclose(L, [[2, -2, 0], [-2, 5, -3], [0, -3, 3]])
    L2 = laplacian(g, 2, w)
    assert np.allclose(L2, np.kron(L, np.eye(2)))


@pytest.mark.parametrize("n", [3, 5, 8])
def test_lambda2_closed_forms(n):
    # path: 2 - 2cos(pi/n); ring: 2 - 2cos(2 pi/n); complete: n
    assert connectivity(path_graph(n))[0] == pytest.approx(2 - 2 * np.cos(np.pi / n), rel=1e-12)
    assert connectivity(ring_graph(n))[0] == pytest.approx(2 - 2 * np.cos(2 * np.pi / n), rel=1e-12)
    lam2, lamn = connectivity(complete_graph(n))
    assert lam2 == pytest.approx(n, rel=1e-12) and lamn == pytest.approx(n, rel=1e-12)


def test_eig_symmetric_rejects_asymmetric():
    with pytest.raises(ValueError):
        eig_symmetric(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_jacobi_sweep_limit_raises():
    a = np.random.default_rng(0).standard_normal((12, 12))
    with pytest.raises(NumericalError):
        jacobi_eigh(a + a.T, max_sweeps=1)


@given(st.integers(2, 9), st.integers(0, 10_000))
def test_jacobi_matches_lapack(n, seed):
    a = np.random.default_rng(seed).standard_normal((n, n))
    a = a + a.T
    for backend in ("numba", "numpy"):
        d, v, _ = jacobi_eigh(a, backend=backend)
        assert np.allclose(d, np.linalg.eigvalsh(a), atol=1e-10 * max(1, np.abs(a).max()))
        assert np.allclose(v @ np.diag(d) @ v.T, a, atol=1e-9)
        assert np.allclose(v.T @ v, np.eye(n), atol=1e-10)


@given(st.integers(2, 8), st.integers(0, 10_000))
def test_laplacian_properties(n, seed):
    rng = np.random.default_rng(seed)
    g = random_connected_graph(n, rng, edge_prob=0.5)
    w = 1.0 + rng.exponential(2.0, g.n_edges)
    L = laplacian(g, 1, w)
    assert np.allclose(L, L.T)
    assert np.allclose(L.sum(axis=1), 0.0, atol=1e-12)
    assert np.linalg.eigvalsh(L)[0] > -1e-10
    assert is_connected(n, g.edges)
    s = eig_symmetric(L)
    assert s.lambda2() > 0


@given(st.integers(3, 8), st.integers(0, 10_000))
def test_lambda2_monotone_in_weights(n, seed):
    # raising edge weights never lowers algebraic connectivity
    rng = np.random.default_rng(seed)
    g = random_connected_graph(n, rng, edge_prob=0.5)
    w = 1.0 + rng.exponential(1.0, g.n_edges)
    lam_lo = connectivity(g, w)[0]
    lam_hi = connectivity(g, w + rng.exponential(1.0, g.n_edges))[0]
    assert lam_hi >= lam_lo - 1e-12


def test_random_graph_deterministic():
    a = random_connected_graph(10, np.random.default_rng(3), edge_prob=0.3)
    b = random_connected_graph(10, np.random.default_rng(3), edge_prob=0.3)
    assert np.array_equal(a.edges, b.edges)


def test_copy_reset_and_config():
    g = path_graph(3, gains=0.5)
    g.weights[:] = 7.0
    assert np.all(g.copy(reset=True).weights == 1.0)
    cfg = g.to_config()
    assert cfg["gains"] == [0.5, 0.5]
