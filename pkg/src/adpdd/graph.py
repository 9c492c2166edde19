"""Undirected weighted agent graphs, Laplacians and symmetric eigenvalues.

Agents are indexed from 0.  Each undirected edge is stored once as
``(i, q)`` with ``i < q``; that lower-index node gets ``+1`` in the
incidence matrix.
"""

from dataclasses import dataclass, field

import numpy as np

from .kernels import NumericalError, jacobi_eigh


class GraphError(ValueError):
    """Invalid graph construction (disconnected, bad weights, bad edges)."""


def _find(parent, i):
    while parent[i] != i:
        parent[i] = parent[parent[i]]
        i = parent[i]
    return i


def is_connected(n, edges):
    """Union-find connectivity test over an edge list."""
    parent = list(range(n))
    groups = n
    for i, q in edges:
        ri, rq = _find(parent, int(i)), _find(parent, int(q))
        if ri != rq:
            parent[ri] = rq
            groups -= 1
    return groups == 1


@dataclass
class Graph:
    """Agent topology with live coupling weights and adaptive gains.

    Attributes
    ----------
    n : int
        Number of agents.
    edges : ndarray of shape (E, 2), int64
        Unordered edges, lower index first, in insertion order.
    weights : ndarray of shape (E,)
        Current coupling weights.  Only the integrator writes to these.
    gains : ndarray of shape (E,)
        Adaptive gain per edge.
    initial_weights : ndarray of shape (E,)
        Weights at construction, kept for the frozen-weight baseline.
    """

    n: int
    edges: np.ndarray
    weights: np.ndarray
    gains: np.ndarray
    initial_weights: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.initial_weights is None:
            self.initial_weights = self.weights.copy()

    @property
    def n_edges(self):
        return int(self.edges.shape[0])

    def copy(self, reset=False):
        """Independent copy; ``reset`` restores the initial weights."""
        w = self.initial_weights if reset else self.weights
        return Graph(self.n, self.edges.copy(), w.copy(), self.gains.copy(),
                     self.initial_weights.copy())

    def with_gains(self, gains):
        """Copy with the initial weights restored and new adaptive gains.

        Zero gains are accepted here (they freeze the weights, which is how
        a gain sweep includes the non-adaptive baseline).
        """
        out = self.copy(reset=True)
        d = np.broadcast_to(np.asarray(gains, dtype=float), (self.n_edges,)).copy()
        if not np.all(np.isfinite(d)) or np.any(d < 0):
            raise GraphError("gains must be nonnegative")
        out.gains = d
        return out

    def to_config(self):
        return {
            "n": self.n,
            "edges": self.edges.tolist(),
            "initial_weight": self.initial_weights.tolist(),
            "gains": self.gains.tolist(),
        }


def build_graph(n, edges, initial_weight=1.0, gains=1.0, allow_low_weight=False):
    """Validate and build a connected graph with uniform initial weights.

    Parameters
    ----------
    n : int
        Number of agents, at least 2.
    edges : sequence of pairs
        Agent index pairs in ``0..n-1``.  Orientation and duplicates in
        reverse order are normalised away; true duplicates are rejected.
    initial_weight : float or sequence
        Starting weight; must be at least 1 unless ``allow_low_weight``
        (which voids the guarantee that the live connectivity dominates
        the initial one).
    gains : float or sequence
        Positive adaptive gain per edge.  A scalar is broadcast.
    """
    n = int(n)
    if n < 2:
        raise GraphError("a graph needs at least 2 agents")
    norm = []
    seen = set()
    for pair in edges:
        if len(pair) != 2:
            raise GraphError(f"edge {pair!r} is not a pair")
        i, q = int(pair[0]), int(pair[1])
        if i == q:
            raise GraphError(f"self-loop at agent {i}")
        if not (0 <= i < n and 0 <= q < n):
            raise GraphError(f"edge ({i}, {q}) outside 0..{n - 1}")
        key = (min(i, q), max(i, q))
        if key in seen:
            raise GraphError(f"duplicate edge {key}")
        seen.add(key)
        norm.append(key)
    if not norm:
        raise GraphError("graph has no edges")
    e = np.array(norm, dtype=np.int64)
    m = e.shape[0]
    w = np.broadcast_to(np.asarray(initial_weight, dtype=float), (m,)).copy()
    d = np.broadcast_to(np.asarray(gains, dtype=float), (m,)).copy()
    if not np.all(np.isfinite(w)) or np.any(w <= 0):
        raise GraphError("initial weights must be positive")
    if not allow_low_weight and np.any(w < 1.0):
        raise GraphError("initial weights below 1 need allow_low_weight=True")
    if not np.all(np.isfinite(d)) or np.any(d <= 0):
        raise GraphError("gains must be positive")
    if not is_connected(n, norm):
        raise GraphError("graph is disconnected")
    return Graph(n, e, w, d)


def path_graph(n, **kw):
    return build_graph(n, [(i, i + 1) for i in range(n - 1)], **kw)


def ring_graph(n, **kw):
    return build_graph(n, [(i, (i + 1) % n) for i in range(n)], **kw)


def complete_graph(n, **kw):
    return build_graph(n, [(i, q) for i in range(n) for q in range(i + 1, n)], **kw)


def random_connected_graph(n, rng, edge_prob=0.3, max_tries=1000, **kw):
    """Erdos-Renyi draw, repeated until connected."""
    for _ in range(max_tries):
        mask = rng.random((n, n)) < edge_prob
        edges = [(i, q) for i in range(n) for q in range(i + 1, n) if mask[i, q]]
        if edges and is_connected(n, edges):
            return build_graph(n, edges, **kw)
    raise GraphError(f"no connected draw in {max_tries} tries")


def incidence(g):
    """Oriented incidence matrix E of shape (n, E); ``E @ E.T`` is L0."""
    m = np.zeros((g.n, g.n_edges))
    idx = np.arange(g.n_edges)
    m[g.edges[:, 0], idx] = 1.0
    m[g.edges[:, 1], idx] = -1.0
    return m


def laplacian(g, l=1, weights=None):
    """Weighted Laplacian lifted to ``L kron I_l``."""
    w = g.weights if weights is None else np.asarray(weights, dtype=float)
    e = incidence(g)
    lap = (e * w) @ e.T
    return np.kron(lap, np.eye(l)) if l > 1 else lap


@dataclass
class SpectralSummary:
    """Ascending eigenvalues (and eigenvectors) of a symmetric matrix."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    sweeps: int

    def lambda2(self, multiplicity=1):
        """Smallest nonzero Laplacian eigenvalue; pass ``l`` for lifted input."""
        return float(self.eigenvalues[multiplicity])

    @property
    def lambda_min(self):
        return float(self.eigenvalues[0])

    @property
    def lambda_max(self):
        return float(self.eigenvalues[-1])


def eig_symmetric(m, sym_tol=1e-10, tol=1e-12, max_sweeps=100):
    """Full symmetric eigen-decomposition by cyclic Jacobi rotations.

    Raises
    ------
    ValueError
        If ``m`` is not square or not symmetric within ``sym_tol``.
    NumericalError
        If the sweep cap is reached.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if m.size and np.max(np.abs(m - m.T)) > sym_tol:
        raise ValueError("matrix is not symmetric")
    d, v, sweeps = jacobi_eigh(0.5 * (m + m.T), tol=tol, max_sweeps=max_sweeps)
    return SpectralSummary(d, v, sweeps)


def connectivity(g, weights=None):
    """Return ``(lambda2, lambda_n)`` of the unlifted weighted Laplacian."""
    s = eig_symmetric(laplacian(g, 1, weights))
    return s.lambda2(), s.lambda_max


__all__ = [
    "Graph",
    "GraphError",
    "NumericalError",
    "SpectralSummary",
    "build_graph",
    "complete_graph",
    "connectivity",
    "eig_symmetric",
    "incidence",
    "is_connected",
    "laplacian",
    "path_graph",
    "random_connected_graph",
    "ring_graph",
]
