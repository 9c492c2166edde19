"""Distributed soft-margin SVM with adaptive coupling.

Node ``i`` holds samples ``(x_ij, y_ij)`` and a local classifier
``(w_i, b_i)``.  The flow, with ``L`` the live weighted Laplacian and
``h_ij = 1 - xi_ij - y_ij (w_i' x_ij + b_i)``:

    w'     = -w - L w - L alpha_w - zeta,   zeta_i = sum_j theta_ij (-y_ij x_ij)
    b'     = -L b - L alpha_b - eta,        eta_i  = sum_j theta_ij (-y_ij)
    alpha_w' = L w,  alpha_b' = L b
    theta' = [h]^+_theta
    xi'    = [-pC - mu + theta]^+_xi
    mu'    = [xi]^+_mu

Edge weights follow the adaptive law on ``z_i = (w_i, b_i)``.
"""

import csv
from dataclasses import dataclass

import numpy as np

from ..dynamics import gated_rk4, projection_plus
from ..graph import laplacian
from ..oracle import solve_linear_qp


class SvmError(ValueError):
    """Invalid SVM data."""


@dataclass
class SvmData:
    """Horizontally partitioned samples; ``partitions[i] = (X_i, y_i)``."""

    partitions: list
    p_scale: float = 1.0
    C: float = 1.0

    def __post_init__(self):
        parts = []
        dim = None
        for X, y in self.partitions:
            X = np.atleast_2d(np.asarray(X, dtype=float))
            y = np.asarray(y, dtype=float).ravel()
            if X.shape[0] == 0:
                raise SvmError("every node needs at least one sample")
            if X.shape[0] != y.size:
                raise SvmError("feature and label counts differ")
            if not np.all(np.isin(y, (-1.0, 1.0))):
                raise SvmError("labels must be -1 or +1")
            if dim is not None and X.shape[1] != dim:
                raise SvmError("feature dimension differs between nodes")
            dim = X.shape[1]
            parts.append((X, y))
        if not parts:
            raise SvmError("no partitions")
        if not (self.p_scale > 0 and self.C > 0):
            raise SvmError("p_scale and C must be positive")
        self.partitions = parts

    @property
    def n(self):
        return len(self.partitions)

    @property
    def dim(self):
        return self.partitions[0][0].shape[1]


@dataclass
class SvmBundle:
    """Flattened sample arrays plus the graph, ready for :func:`svm_rhs`."""

    data: SvmData
    graph: object
    X: np.ndarray        # (N, m) all samples
    y: np.ndarray        # (N,)
    owner: np.ndarray    # (N,) node of each sample

    @property
    def n(self):
        return self.data.n

    @property
    def dim(self):
        return self.data.dim

    @property
    def n_samples(self):
        return self.y.size

    @property
    def penalty(self):
        return self.data.p_scale * self.data.C


@dataclass
class SvmState:
    w: np.ndarray
    b: np.ndarray
    xi: np.ndarray
    alpha_w: np.ndarray
    alpha_b: np.ndarray
    theta: np.ndarray
    mu_dual: np.ndarray
    weights: np.ndarray

    _fields = ("w", "b", "xi", "alpha_w", "alpha_b", "theta", "mu_dual", "weights")

    def pack(self):
        return np.concatenate([np.ravel(getattr(self, f)) for f in self._fields])

    @classmethod
    def unpack(cls, vec, bundle):
        n, m, N, E = bundle.n, bundle.dim, bundle.n_samples, bundle.graph.n_edges
        sizes = (n * m, n, N, n * m, n, N, N, E)
        shapes = ((n, m), (n,), (N,), (n, m), (n,), (N,), (N,), (E,))
        out, k = [], 0
        for size, shape in zip(sizes, shapes):
            out.append(np.asarray(vec[k:k + size]).reshape(shape))
            k += size
        return cls(*out)

    @classmethod
    def zeros(cls, bundle):
        return cls.unpack(np.concatenate([np.zeros(bundle.n * (2 * bundle.dim + 2) + 3 * bundle.n_samples),
                                          bundle.graph.weights.copy()]), bundle)


def build_svm(data, g):
    """Validate the pairing of data and graph and flatten the samples."""
    if g.n != data.n:
        raise SvmError(f"graph has {g.n} nodes, data has {data.n} partitions")
    X = np.vstack([X for X, _ in data.partitions])
    y = np.concatenate([y for _, y in data.partitions])
    owner = np.concatenate([np.full(len(yy), i) for i, (_, yy) in enumerate(data.partitions)])
    return SvmBundle(data, g, X, y, owner.astype(np.int64))


def hinge(state, bundle):
    """``h_ij = 1 - xi - y (w_i' x + b_i)`` per sample."""
    score = np.einsum("jk,jk->j", state.w[bundle.owner], bundle.X) + state.b[bundle.owner]
    return 1.0 - state.xi - bundle.y * score


def svm_rhs(state, bundle, g=None, epsilon=1.0, adaptive=True):
    """All derivative blocks as an :class:`SvmState` (``weights`` holds the weight law)."""
    g = bundle.graph if g is None else g
    lap = laplacian(g, 1, state.weights)
    n = bundle.n
    zeta = np.zeros_like(state.w)
    np.add.at(zeta, bundle.owner, state.theta[:, None] * (-bundle.y[:, None] * bundle.X))
    eta = np.zeros(n)
    np.add.at(eta, bundle.owner, state.theta * (-bundle.y))
    dw = -state.w - lap @ state.w - lap @ state.alpha_w - zeta
    db = -lap @ state.b - lap @ state.alpha_b - eta
    dth = projection_plus(hinge(state, bundle), state.theta)
    dxi = projection_plus(-bundle.penalty - state.mu_dual + state.theta, state.xi)
    dmu = projection_plus(state.xi, state.mu_dual)
    if adaptive:
        i, q = g.edges[:, 0], g.edges[:, 1]
        e = np.hstack([state.w[i] - state.w[q], (state.b[i] - state.b[q])[:, None]])
        ed = np.hstack([dw[i] - dw[q], (db[i] - db[q])[:, None]])
        dweights = epsilon * g.gains * (np.sum(e * e, axis=1) + np.sum(ed * ed, axis=1))
    else:
        dweights = np.zeros(g.n_edges)
    return SvmState(dw, db, np.atleast_1d(dxi), lap @ state.w, lap @ state.b,
                    np.atleast_1d(dth), np.atleast_1d(dmu), dweights)


def simulate_svm(bundle, dt=1e-3, t_end=20.0, epsilon=1.0, adaptive=True, state0=None, record_every=10):
    """Fixed-step gated RK4 with ``xi, theta, mu >= 0`` clamped after each step.

    Returns
    -------
    final : SvmState
    records : dict of arrays (``t``, ``w``, ``b``, ``xi``, ``theta``, ``mu_dual``, ``weights``)
    """
    state = SvmState.zeros(bundle) if state0 is None else state0
    y = state.pack()
    n, m, N = bundle.n, bundle.dim, bundle.n_samples
    off_xi = n * m + n
    off_th = off_xi + N + n * m + n
    clamp = np.r_[off_xi:off_xi + N, off_th:off_th + 2 * N]

    def rhs(vec):
        return svm_rhs(SvmState.unpack(vec, bundle), bundle, epsilon=epsilon, adaptive=adaptive).pack()

    steps = int(round(t_end / dt))
    rec = {k: [] for k in ("t", "w", "b", "xi", "theta", "mu_dual", "weights")}
    for k in range(steps + 1):
        if k % record_every == 0 or k == steps:
            s = SvmState.unpack(y, bundle)
            rec["t"].append(k * dt)
            for f in ("w", "b", "xi", "theta", "mu_dual", "weights"):
                rec[f].append(np.copy(getattr(s, f)))
        if k == steps:
            break
        y, _ = gated_rk4(rhs, y, dt)
        y[clamp] = np.maximum(y[clamp], 0.0)
        if not np.all(np.isfinite(y)):
            raise FloatingPointError(f"SVM state diverged at t={(k + 1) * dt:.6g}")
    return SvmState.unpack(y, bundle), {k: np.array(v) for k, v in rec.items()}


def predict(state, X):
    """Labels from the node-averaged classifier."""
    w = state.w.mean(axis=0)
    b = float(state.b.mean())
    return np.where(np.asarray(X, dtype=float) @ w + b >= 0.0, 1.0, -1.0)


def accuracy(state, bundle):
    return float(np.mean(predict(state, bundle.X) == bundle.y))


def centralized_kkt(bundle):
    """KKT point of the consensus-reduced QP, replicated across nodes.

    The reduced problem is ``min n/2 |w|^2 + pC sum xi`` subject to the
    hinge and ``xi >= 0`` constraints, i.e. the distributed objective
    evaluated on a consensus point.  Consensus duals are the
    minimum-norm solutions of the per-node stationarity conditions.
    """
    n, m, N = bundle.n, bundle.dim, bundle.n_samples
    size = m + 1 + N
    H = np.zeros((size, size))
    H[:m, :m] = n * np.eye(m)
    c = np.zeros(size)
    c[m + 1:] = bundle.penalty
    # hinge: -y (x'w + b) - xi <= -1 ; slack: -xi <= 0
    A = np.zeros((2 * N, size))
    A[:N, :m] = -bundle.y[:, None] * bundle.X
    A[:N, m] = -bundle.y
    A[:N, m + 1:] = -np.eye(N)
    A[N:, m + 1:] = -np.eye(N)
    rhs = np.concatenate([-np.ones(N), np.zeros(N)])
    z, lam = solve_linear_qp(H, c, A, rhs)
    w, b, xi = z[:m], z[m], np.maximum(z[m + 1:], 0.0)
    # round-off slack would open the xi >= 0 gate
    xi[xi < 1e-12] = 0.0
    theta, mu = np.maximum(lam[:N], 0.0), np.maximum(lam[N:], 0.0)
    W = np.tile(w, (n, 1))
    B = np.full(n, b)
    lap = laplacian(bundle.graph, 1, bundle.graph.weights)
    zeta = np.zeros_like(W)
    np.add.at(zeta, bundle.owner, theta[:, None] * (-bundle.y[:, None] * bundle.X))
    eta = np.zeros(n)
    np.add.at(eta, bundle.owner, theta * (-bundle.y))
    alpha_w = np.linalg.lstsq(lap, -W - zeta, rcond=None)[0]
    alpha_b = np.linalg.lstsq(lap, -eta, rcond=None)[0]
    return SvmState(W, B, xi, alpha_w, alpha_b, theta, mu, bundle.graph.weights.copy())


def load_svm_csv(path, n_nodes=None, partition_path=None, p_scale=1.0, C=1.0):
    """Read ``label,feat1,...,featm`` lines into an :class:`SvmData`.

    Samples go to nodes round-robin, or by the node index on each line of
    ``partition_path`` (one integer per sample, 0-based).
    """
    labels, feats = [], []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].lstrip().startswith("#"):
                continue
            try:
                vals = [float(v) for v in row]
            except ValueError as exc:
                raise SvmError(f"{path}:{lineno}: {exc}") from exc
            if len(vals) < 2:
                raise SvmError(f"{path}:{lineno}: need a label and at least one feature")
            labels.append(vals[0])
            feats.append(vals[1:])
    if not labels:
        raise SvmError(f"{path}: no samples")
    if len({len(f) for f in feats}) != 1:
        raise SvmError(f"{path}: rows have different feature counts")
    X, y = np.array(feats), np.array(labels)
    if partition_path is not None:
        with open(partition_path) as fh:
            nodes = np.array([int(s) for s in fh.read().split()])
        if nodes.size != y.size:
            raise SvmError("partition file length differs from the sample count")
        count = int(nodes.max()) + 1 if n_nodes is None else int(n_nodes)
    else:
        if n_nodes is None:
            raise SvmError("n_nodes is required for round-robin assignment")
        count = int(n_nodes)
        nodes = np.arange(y.size) % count
    parts = [(X[nodes == i], y[nodes == i]) for i in range(count)]
    return SvmData(parts, p_scale, C)


def toy_data():
    """Two nodes with two separable points each (margin hyperplane ``w ~ e1``)."""
    return SvmData([
        (np.array([[2.0, 0.0], [-2.0, 0.0]]), np.array([1.0, -1.0])),
        (np.array([[2.0, 1.0], [-2.0, -1.0]]), np.array([1.0, -1.0])),
    ])


__all__ = [
    "SvmBundle",
    "SvmData",
    "SvmError",
    "SvmState",
    "accuracy",
    "build_svm",
    "centralized_kkt",
    "hinge",
    "load_svm_csv",
    "predict",
    "simulate_svm",
    "svm_rhs",
    "toy_data",
]
