"""Adaptive distributed primal-dual vector field and its integrator.

State per agent ``i``: primal ``x_i``, consensus dual ``alpha_i`` and one
inequality dual ``theta_j`` per constraint, plus one coupling weight per
edge.  The flow is

    x'     = -grad f(x) - L x - L alpha - sum_j theta_j grad g_j(x)
    alpha' = L x
    theta' = [g(x)]^+_theta
    a_e'   = eps * d_e * (|e|^2 + |e'|^2)      (e = x_i - x_q on edge e)

where ``L`` is the live weighted Laplacian lifted to ``R^{n l}``.

The reference functions in this module (``primal_rhs`` …) are written
with dense matrices and are independent of the kernels in
:mod:`adpdd.kernels`, which the tests exploit.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .graph import connectivity, laplacian
from .problem import constraint_eval, hessian_lambda_min, objective_gradient


class DivergenceError(RuntimeError):
    """A state component became non-finite.

    Attributes
    ----------
    t : float
        Time of the first non-finite state.
    component : str
        Human-readable name of the offending entry, e.g. ``"x[3,0]"``.
    trajectory : Trajectory or None
        Records gathered before the blow-up.
    """

    def __init__(self, t, component, trajectory=None):
        super().__init__(f"non-finite {component} at t={t:.6g}")
        self.t = t
        self.component = component
        self.trajectory = trajectory


@dataclass
class SystemState:
    """Primal, dual and weight state at time ``t``; ``x`` and ``alpha`` are (n, l)."""

    x: np.ndarray
    alpha: np.ndarray
    theta: np.ndarray
    weights: np.ndarray
    t: float = 0.0

    def copy(self):
        return SystemState(self.x.copy(), self.alpha.copy(), self.theta.copy(),
                           self.weights.copy(), self.t)


@dataclass
class Derivatives:
    dx: np.ndarray
    dalpha: np.ndarray
    dtheta: np.ndarray
    dweights: np.ndarray
    active_set: np.ndarray


@dataclass
class SimConfig:
    """Integration settings.

    ``record_every`` decimates the stored trajectory; ``tol`` is the
    max-KKT threshold for early stop (0 disables it).
    """

    dt: float = 1e-4
    t_end: float = 10.0
    epsilon: float = 1.0
    adaptive: bool = True
    record_every: int = 100
    tol: float = 1e-6
    check_after: float = 0.0

    def __post_init__(self):
        if not (self.dt > 0):
            raise ValueError("dt must be positive")
        if not (self.t_end > self.dt):
            raise ValueError("t_end must exceed dt")
        if not (self.epsilon > 0):
            raise ValueError("epsilon must be positive")
        if int(self.record_every) < 1:
            raise ValueError("record_every must be at least 1")
        if self.tol < 0:
            raise ValueError("tol must be nonnegative")
        self.record_every = int(self.record_every)

    @property
    def n_steps(self):
        return int(round(self.t_end / self.dt))


# ----------------------------------------------------------------------------
# reference vector field
# ----------------------------------------------------------------------------


def projection_plus(value, gate):
    """``value`` where ``gate > 0`` or ``value > 0``, else 0 (elementwise)."""
    value = np.asarray(value, dtype=float)
    gate = np.asarray(gate, dtype=float)
    out = np.where((gate > 0.0) | (value > 0.0), value, 0.0)
    return float(out) if out.ndim == 0 else out


def _blocks(p, v):
    return np.asarray(v, dtype=float).reshape(p.n, p.l)


def _lifted(g, p, weights=None):
    return laplacian(g, p.l, weights)


def primal_rhs(state, p, g):
    """Primal derivative, shape (n, l)."""
    x = _blocks(p, state.x)
    a = _blocks(p, state.alpha)
    lap = _lifted(g, p, state.weights)
    dx = -objective_gradient(p, x) - (lap @ x.ravel()).reshape(x.shape) - (lap @ a.ravel()).reshape(x.shape)
    if p.m:
        _, grads = constraint_eval(p, x)
        for j, c in enumerate(p.constraints):
            dx[c.agent] -= state.theta[j] * grads[j]
    return dx


def dual_rhs(state, p, g):
    """``(dalpha, dtheta, active_set)`` at ``state``."""
    x = _blocks(p, state.x)
    lap = _lifted(g, p, state.weights)
    dalpha = (lap @ x.ravel()).reshape(x.shape)
    if p.m:
        vals, _ = constraint_eval(p, x)
        theta = np.asarray(state.theta, dtype=float)
        active = (theta > 0.0) | (vals > 0.0)
        dtheta = np.where(active, vals, 0.0)
    else:
        active = np.zeros(0, dtype=bool)
        dtheta = np.zeros(0)
    return dalpha, dtheta, active


def weight_rhs(state, dx, g, epsilon=1.0):
    """Adaptive law per edge: ``eps * d * (|x_i - x_q|^2 + |dx_i - dx_q|^2)``."""
    x = np.asarray(state.x, dtype=float).reshape(g.n, -1)
    dx = np.asarray(dx, dtype=float).reshape(g.n, -1)
    i, q = g.edges[:, 0], g.edges[:, 1]
    e = x[i] - x[q]
    ed = dx[i] - dx[q]
    return epsilon * g.gains * (np.sum(e * e, axis=1) + np.sum(ed * ed, axis=1))


def derivatives(state, p, g, epsilon=1.0, adaptive=True):
    """All derivative blocks, primal first so the weight law sees ``dx``."""
    dx = primal_rhs(state, p, g)
    dalpha, dtheta, active = dual_rhs(state, p, g)
    dw = weight_rhs(state, dx, g, epsilon) if adaptive else np.zeros(g.n_edges)
    return Derivatives(dx, dalpha, dtheta, dw, active)


# ----------------------------------------------------------------------------
# integration
# ----------------------------------------------------------------------------

_NO_DISTURBANCE = (0, 0, 0.0, 0.0, 0.0, 0.0, 0.0)


def _kernel_disturbance(disturbance, n, l, cfg, rng):
    """Flatten a disturbance object into kernel arguments."""
    if disturbance is None:
        code = _NO_DISTURBANCE
        direction = np.zeros((n, l))
        noise = np.zeros((1, n, l))
        hold = 1.0
    else:
        code, direction, noise, hold = disturbance.kernel_args(n, l, cfg, rng)
    return code, np.ascontiguousarray(direction, dtype=float), np.ascontiguousarray(noise, dtype=float), float(hold)


def _component_name(idx, n, l, m):
    if idx < n * l:
        return f"x[{idx // l},{idx % l}]"
    idx -= n * l
    if idx < n * l:
        return f"alpha[{idx // l},{idx % l}]"
    idx -= n * l
    if idx < m:
        return f"theta[{idx}]"
    return f"weights[{idx - m}]"


def _run_kernel(p, g, x, alpha, theta, w, t0, cfg, nsteps, record_every, tol, check_after,
                disturbance=None, rng=None, backend=None):
    n, l, m, ne = p.n, p.l, p.m, g.n_edges
    P, r, cagent, cQ, cq, cc = p.arrays()
    code, direction, noise, hold = _kernel_disturbance(disturbance, n, l, cfg, rng)
    cap = nsteps // record_every + 2
    rec = dict(
        t=np.zeros(cap), x=np.zeros((cap, n, l)), alpha=np.zeros((cap, n, l)),
        theta=np.zeros((cap, m)), weights=np.zeros((cap, ne)), dx=np.zeros((cap, n, l)),
        dalpha=np.zeros((cap, n, l)), dtheta=np.zeros((cap, m)), dweights=np.zeros((cap, ne)),
        active=np.zeros((cap, m), dtype=np.bool_), ports=np.zeros((cap, kernels.N_PORTS)),
        kkt=np.zeros((cap, kernels.N_KKT)), du=np.zeros((cap, n, l)), ddu=np.zeros((cap, n, l)),
    )
    out = kernels.integrate(
        np.ascontiguousarray(x, dtype=float), np.ascontiguousarray(alpha, dtype=float),
        np.ascontiguousarray(theta, dtype=float), np.ascontiguousarray(w, dtype=float),
        float(t0), P, r, g.edges, g.gains.astype(float), cagent, cQ, cq, cc,
        float(cfg.epsilon), bool(cfg.adaptive), float(cfg.dt), int(nsteps), int(record_every),
        float(tol), float(check_after),
        int(code[0]), int(code[1]), float(code[2]), float(code[3]), float(code[4]),
        float(code[5]), float(code[6]), direction, noise, hold,
        rec["t"], rec["x"], rec["alpha"], rec["theta"], rec["weights"], rec["dx"],
        rec["dalpha"], rec["dtheta"], rec["dweights"], rec["active"], rec["ports"],
        rec["kkt"], rec["du"], rec["ddu"], backend=backend,
    )
    xf, af, tf, wf, nrec, status, fail_step, fail_comp = out
    rec = {k: v[:nrec].copy() for k, v in rec.items()}
    return xf, af, tf, wf, int(status), int(fail_step), int(fail_comp), rec


def step(state, p, g, cfg):
    """Advance one fixed RK4 step; weights are written back to ``g``.

    Raises
    ------
    DivergenceError
        If any state entry becomes non-finite.
    """
    xf, af, tf, wf, status, _, comp, _ = _run_kernel(
        p, g, _blocks(p, state.x), _blocks(p, state.alpha), np.asarray(state.theta, dtype=float),
        np.asarray(state.weights, dtype=float), state.t, cfg, 1, 1, 0.0, 0.0)
    if status == kernels.STATUS_DIVERGED:
        raise DivergenceError(state.t + cfg.dt, _component_name(comp, p.n, p.l, p.m))
    g.weights[:] = wf
    return SystemState(xf, af, tf, wf.copy(), state.t + cfg.dt)


def gated_rk4(rhs, y, dt):
    """One classical RK4 step of ``y' = rhs(y)``.

    ``rhs`` re-evaluates any projection gates itself, so each stage sees
    its own gate pattern.  Returns the new state and the first-stage
    derivative.
    """
    k1 = rhs(y)
    k2 = rhs(y + 0.5 * dt * k1)
    k3 = rhs(y + 0.5 * dt * k2)
    k4 = rhs(y + dt * k3)
    return y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4), k1


@dataclass
class Trajectory:
    """Decimated simulation records.

    Per-record arrays have the record index first.  ``ports`` holds the
    cumulative trapezoidal integrals of the H1, H2, H3 supply rates and of
    the output / disturbance-derivative energies (columns in
    :mod:`adpdd.kernels` order).  ``kkt`` columns are stationarity,
    feasibility, dual feasibility, complementarity and consensus.
    """

    t: np.ndarray
    x: np.ndarray
    alpha: np.ndarray
    theta: np.ndarray
    weights: np.ndarray
    dx: np.ndarray
    dalpha: np.ndarray
    dtheta: np.ndarray
    dweights: np.ndarray
    active: np.ndarray
    ports: np.ndarray
    kkt: np.ndarray
    du: np.ndarray
    ddu: np.ndarray
    lambda2: np.ndarray
    lambda_n: np.ndarray
    lambda2_initial: float
    lambda_n_initial: float
    hessian_min: float
    status: str
    cfg: SimConfig
    a_star: float
    gains: np.ndarray
    initial_weights: np.ndarray
    edges: np.ndarray
    final: SystemState
    disturbance: object = None
    storage: dict = field(default_factory=dict)

    def __len__(self):
        return int(self.t.size)

    @property
    def kkt_max(self):
        return self.kkt.max(axis=1) if self.kkt.size else np.zeros(0)

    @property
    def consensus(self):
        return self.kkt[:, 4]

    @property
    def v_total(self):
        return self.storage["v_total"]


def storage_series(rec, cfg, gains, a_star):
    """V_H1, V_H2, V_H3, W and their total at every record."""
    dx, dal, dth = rec["dx"], rec["dalpha"], rec["dtheta"]
    r = dx.shape[0]
    kin = 0.5 * np.sum(dx.reshape(r, -1) ** 2, axis=1)
    v_h2 = 0.5 * np.sum(dal.reshape(r, -1) ** 2, axis=1)
    v_h3 = 0.5 * np.sum(np.where(rec["active"], dth, 0.0) ** 2, axis=1) if dth.size else np.zeros(r)
    w = weight_storage(rec["weights"], gains, a_star, cfg.epsilon, cfg.adaptive)
    v_h1 = kin + w
    return {"v_h1": v_h1, "v_h2": v_h2, "v_h3": v_h3, "w": w, "v_total": v_h1 + v_h2 + v_h3}


def weight_storage(weights, gains, a_star, epsilon=1.0, adaptive=True):
    """``1/2 sum (a - a*)^2 / (eps d)`` over adapting edges (0 when frozen)."""
    weights = np.atleast_2d(weights)
    if not adaptive:
        return np.zeros(weights.shape[0])
    live = gains > 0
    if not np.any(live):
        return np.zeros(weights.shape[0])
    dev = weights[:, live] - a_star
    return 0.5 * np.sum(dev * dev / (epsilon * gains[live]), axis=1)


def _spectra(g, weights):
    lam2 = np.empty(weights.shape[0])
    lamn = np.empty(weights.shape[0])
    prev = None
    for k, w in enumerate(weights):
        if prev is not None and np.array_equal(w, weights[prev]):
            lam2[k], lamn[k] = lam2[prev], lamn[prev]
            continue
        lam2[k], lamn[k] = connectivity(g, w)
        prev = k
    return lam2, lamn


def simulate(p, g, x0, cfg, alpha0=None, theta0=None, a_star=2.0, disturbance=None,
             rng=None, backend=None):
    """Integrate from ``x0`` until convergence or ``cfg.t_end``.

    Works on a copy of ``g`` (starting from its current weights); the
    caller's graph is left untouched.

    Parameters
    ----------
    disturbance : object, optional
        Anything with a ``kernel_args(n, l, cfg, rng)`` method, normally a
        :class:`adpdd.robustness.DisturbanceSpec`.
    a_star : float
        Reference weight used by the weight storage term.

    Raises
    ------
    DivergenceError
        On a non-finite state; the partial trajectory is attached.
    """
    g = g.copy()
    x0 = _blocks(p, x0)
    alpha0 = np.zeros_like(x0) if alpha0 is None else _blocks(p, alpha0)
    theta0 = np.zeros(p.m) if theta0 is None else np.asarray(theta0, dtype=float).reshape(p.m)
    if np.any(theta0 < 0):
        raise ValueError("theta0 must be nonnegative")
    xf, af, tf, wf, status, fail_step, fail_comp, rec = _run_kernel(
        p, g, x0, alpha0, theta0, g.weights.copy(), 0.0, cfg, cfg.n_steps, cfg.record_every,
        cfg.tol, cfg.check_after, disturbance, rng, backend)
    g0 = g.copy(reset=True)
    lam2_0, lamn_0 = connectivity(g0)
    # records of a diverged run may hold huge values; keep the bookkeeping quiet
    with np.errstate(over="ignore", invalid="ignore"):
        lam2, lamn = _spectra(g, rec["weights"]) if len(rec["t"]) else (np.zeros(0), np.zeros(0))
        storage = storage_series(rec, cfg, g.gains, a_star)
    names = {kernels.STATUS_HORIZON: "horizon", kernels.STATUS_CONVERGED: "converged",
             kernels.STATUS_DIVERGED: "diverged"}
    t_final = rec["t"][-1] if status != kernels.STATUS_DIVERGED else fail_step * cfg.dt
    traj = Trajectory(
        lambda2=lam2, lambda_n=lamn, lambda2_initial=lam2_0, lambda_n_initial=lamn_0,
        hessian_min=hessian_lambda_min(p), status=names[status], cfg=replace(cfg),
        a_star=float(a_star), gains=g.gains.copy(), initial_weights=g.initial_weights.copy(),
        edges=g.edges.copy(), final=SystemState(xf, af, tf, wf, float(t_final)),
        disturbance=disturbance, storage=storage, **rec)
    if status == kernels.STATUS_DIVERGED:
        raise DivergenceError(fail_step * cfg.dt, _component_name(fail_comp, p.n, p.l, p.m), traj)
    return traj


__all__ = [
    "Derivatives",
    "DivergenceError",
    "SimConfig",
    "SystemState",
    "Trajectory",
    "derivatives",
    "dual_rhs",
    "gated_rk4",
    "primal_rhs",
    "projection_plus",
    "simulate",
    "step",
    "storage_series",
    "weight_rhs",
    "weight_storage",
]
