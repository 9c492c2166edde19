"""Storage functions, KKT residuals and sampled dissipation checks.

The checks here compare recorded trajectories against continuous-time
inequalities, so every comparison carries an explicit discretisation
slack ``10 * dt * (1 + |state|_inf)`` that shrinks linearly with ``dt``.
"""

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .dynamics import simulate, weight_storage
from .graph import laplacian
from .problem import constraint_eval, objective_gradient


class DiagnosticsError(ValueError):
    """Insufficient or inconsistent data for a check."""


def slack(dt, state_norm, factor=10.0):
    return factor * dt * (1.0 + state_norm)


def resolve_a_star(a_star, weights=None):
    """Validate ``a_star``; ``"auto"`` picks ``max(2, largest weight)``."""
    if isinstance(a_star, str):
        if a_star != "auto":
            raise DiagnosticsError(f"unknown a_star {a_star!r}")
        top = float(np.max(weights)) if weights is not None and np.size(weights) else 0.0
        return max(2.0, top)
    a_star = float(a_star)
    if not a_star > 1.0:
        raise DiagnosticsError("a_star must exceed 1")
    return a_star


# ----------------------------------------------------------------------------
# storage
# ----------------------------------------------------------------------------


@dataclass
class StorageSnapshot:
    v_h1: float
    v_h2: float
    v_h3: float
    w: float
    v_total: float
    v_bar: float
    a_star: float


def storage_snapshot(state, derivs, p, g, a_star=2.0, reference=None, epsilon=1.0, adaptive=True):
    """Storage values at one state.

    Parameters
    ----------
    reference : tuple (x*, alpha*, theta*), optional
        Saddle point for the distance storage ``v_bar``; NaN without it.
    """
    a_star = resolve_a_star(a_star)
    w = float(weight_storage(state.weights[None, :], g.gains, a_star, epsilon, adaptive)[0])
    v_h1 = 0.5 * float(np.sum(np.square(derivs.dx))) + w
    v_h2 = 0.5 * float(np.sum(np.square(derivs.dalpha)))
    dth = np.where(derivs.active_set, derivs.dtheta, 0.0)
    v_h3 = 0.5 * float(np.sum(dth * dth))
    v_bar = math.nan
    if reference is not None:
        xs, als, ths = reference
        v_bar = 0.5 * (float(np.sum((np.ravel(state.x) - np.ravel(xs)) ** 2))
                       + float(np.sum((np.ravel(state.alpha) - np.ravel(als)) ** 2))
                       + float(np.sum((np.ravel(state.theta) - np.ravel(ths)) ** 2))) + w
    return StorageSnapshot(v_h1, v_h2, v_h3, w, v_h1 + v_h2 + v_h3, v_bar, a_star)


def v_bar_series(traj, reference):
    """Distance storage along a trajectory."""
    xs, als, ths = (np.asarray(v, dtype=float) for v in reference)
    r = len(traj)
    d = (np.sum((traj.x - xs.reshape(traj.x.shape[1:])).reshape(r, -1) ** 2, axis=1)
         + np.sum((traj.alpha - als.reshape(traj.alpha.shape[1:])).reshape(r, -1) ** 2, axis=1)
         + np.sum((traj.theta - ths.reshape(-1)) ** 2, axis=1))
    return 0.5 * d + traj.storage["w"]


# ----------------------------------------------------------------------------
# KKT
# ----------------------------------------------------------------------------


@dataclass
class KktResidual:
    stationarity: float
    feasibility: float
    dual_feasibility: float
    complementarity: float
    consensus: float

    @property
    def max_residual(self):
        return max(self.stationarity, self.feasibility, self.dual_feasibility,
                   self.complementarity, self.consensus)


def kkt_residual(state, p, g):
    """Five KKT violation measures; stationarity uses the live weights."""
    x = np.asarray(state.x, dtype=float).reshape(p.n, p.l)
    a = np.asarray(state.alpha, dtype=float).reshape(p.n, p.l)
    th = np.asarray(state.theta, dtype=float).reshape(p.m)
    lap = laplacian(g, p.l, state.weights)
    stat = objective_gradient(p, x) + (lap @ a.ravel()).reshape(x.shape)
    vals, grads = constraint_eval(p, x)
    for j, c in enumerate(p.constraints):
        stat[c.agent] += th[j] * grads[j]
    e = x[g.edges[:, 0]] - x[g.edges[:, 1]]
    return KktResidual(
        stationarity=float(np.max(np.abs(stat))),
        feasibility=max(0.0, float(np.max(vals))) if p.m else 0.0,
        dual_feasibility=max(0.0, float(-np.min(th))) if p.m else 0.0,
        complementarity=float(np.max(np.abs(th * vals))) if p.m else 0.0,
        consensus=float(np.max(np.abs(e))) if e.size else 0.0,
    )


# ----------------------------------------------------------------------------
# reports
# ----------------------------------------------------------------------------


@dataclass
class CheckReport:
    """Outcome of one sampled inequality check.

    ``worst_margin`` is ``max(lhs - rhs - slack)``; the check passes when
    it is ``<= 0``.
    """

    name: str
    passed: bool
    worst_margin: float
    time_of_worst: float
    tolerances: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    def to_dict(self):
        return _jsonable(asdict(self))

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


def _state_norms(traj):
    r = len(traj)
    parts = [np.abs(traj.x.reshape(r, -1)), np.abs(traj.alpha.reshape(r, -1))]
    if traj.theta.size:
        parts.append(np.abs(traj.theta))
    return np.max(np.hstack(parts), axis=1)


def _report(name, margins, times, tol, details=None):
    k = int(np.argmax(margins)) if margins.size else 0
    worst = float(margins[k]) if margins.size else 0.0
    return CheckReport(name, bool(worst <= 0.0), worst, float(times[k]) if margins.size else 0.0,
                       tol, details or {})


def verify_passivity(traj, which="H2", a_star=None):
    """Storage increase versus accumulated supply for one subsystem.

    ``which`` is ``"H1"``, ``"H2"`` or ``"H3"``.  The supply integral is
    accumulated step by step inside the integrator (trapezoidal rule).
    For H1 the report also carries the margin of the output-strict form
    (``details["strict_margin"]``), evaluated with record-level
    trapezoidal integration.
    """
    if len(traj) < 3:
        raise DiagnosticsError("need at least 3 records")
    col = {"H1": 0, "H2": 1, "H3": 2}[which]
    dt = traj.cfg.dt
    delta = slack(dt, _state_norms(traj))
    if which == "H1":
        if a_star is None:
            store = traj.storage["v_h1"]
            a_star = traj.a_star
        else:
            a_star = resolve_a_star(a_star, traj.weights)
            r = len(traj)
            store = (0.5 * np.sum(traj.dx.reshape(r, -1) ** 2, axis=1)
                     + weight_storage(traj.weights, traj.gains, a_star, traj.cfg.epsilon, traj.cfg.adaptive))
    else:
        store = traj.storage["v_h2" if which == "H2" else "v_h3"]
    lhs = store - store[0]
    rhs = traj.ports[:, col]
    margins = lhs - rhs - delta
    details = {"storage_change": float(lhs[-1]), "supply_integral": float(rhs[-1])}
    if which == "H1":
        details["strict_margin"] = float(np.max(lhs - _strict_supply(traj, a_star) - delta))
    return _report(f"passivity_{which}", margins, traj.t, {"slack": "10*dt*(1+|state|_inf)", "dt": dt},
                   details)


def _disagreement(x):
    return x - x.mean(axis=1, keepdims=True)


def _strict_supply(traj, a_star):
    r = len(traj)
    dx2 = np.sum(traj.dx.reshape(r, -1) ** 2, axis=1)
    dis2 = np.sum(_disagreement(traj.x).reshape(r, -1) ** 2, axis=1)
    rate = -(traj.hessian_min + a_star * traj.lambda2) * dx2 + (1.0 - a_star) * traj.lambda2 * dis2
    supply = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(traj.t) * (rate[1:] + rate[:-1]))])
    # the recorded port integral is the exact supply; add the strict rate on top
    return traj.ports[:, 0] + supply


def verify_lyapunov_decrease(traj, a_star=None, reference=None):
    """Check that ``V_total`` (and ``v_bar`` if a reference is given) never rises.

    Every increment between consecutive records must stay below
    ``10 * dt * (1 + |state|_inf)``, with the state norm taken over
    ``(x, alpha, theta)`` at the earlier record.

    Parameters
    ----------
    a_star : float or "auto", optional
        Override the reference weight stored with the trajectory.
    """
    if len(traj) < 2:
        raise DiagnosticsError("need at least 2 records")
    if a_star is None:
        a_star = traj.a_star
        v = traj.storage["v_total"]
        w = traj.storage["w"]
    else:
        a_star = resolve_a_star(a_star, traj.weights)
        w = weight_storage(traj.weights, traj.gains, a_star, traj.cfg.epsilon, traj.cfg.adaptive)
        v = traj.storage["v_total"] - traj.storage["w"] + w
    delta = slack(traj.cfg.dt, _state_norms(traj))[:-1]
    margins = np.diff(v) - delta
    details = {
        "a_star": a_star,
        "max_increment": float(np.max(np.diff(v))),
        "w_increasing_records": int(np.sum(np.diff(w) > 0)),
        "records": len(traj),
    }
    if reference is not None:
        vb = v_bar_series(traj, reference) - traj.storage["w"] + w
        bm = np.diff(vb) - delta
        details["v_bar_worst_margin"] = float(np.max(bm))
        margins = np.maximum(margins, bm)
    return _report("lyapunov_decrease", margins, traj.t[1:], {"slack": "10*dt*(1+|state|_inf)",
                                                             "dt": traj.cfg.dt}, details)


def verify_lambda2_ordering(traj):
    """``lambda2(t) >= lambda2(L0)`` everywhere, strictly after the first nonzero edge error.

    The strict part applies only to adaptive runs with some positive gain;
    records up to and including the first one with a nonzero edge error
    only need the non-strict inequality.
    """
    lam0 = traj.lambda2_initial
    lam = np.asarray(traj.lambda2)
    margins = lam0 - lam
    strict = traj.cfg.adaptive and np.any(traj.gains > 0)
    first = None
    if strict:
        r = len(traj)
        e = traj.x.reshape(r, traj.x.shape[1], -1)[:, traj.edges[:, 0]] - \
            traj.x.reshape(r, traj.x.shape[1], -1)[:, traj.edges[:, 1]]
        nonzero = np.flatnonzero(np.any(e.reshape(r, -1) != 0.0, axis=1))
        if nonzero.size:
            first = int(nonzero[0])
            after = np.arange(r) > first
            # strict inequality: equality counts as a violation
            margins = np.where(after & (lam <= lam0), np.maximum(margins, np.finfo(float).tiny), margins)
    violations = int(np.sum(margins > 0))
    return _report("lambda2_ordering", margins, traj.t, {"strict": bool(strict)},
                   {"lambda2_initial": lam0, "lambda2_min": float(lam.min()), "violations": violations,
                    "first_nonzero_error_record": first})


def verify_lambda2_ratio(traj, rel_tol=1e-9):
    """``lambda2(t) <= (lambda_n(t) / lambda_n(L0)) lambda2(L0) (1 + rel_tol)`` at every record."""
    cap = np.asarray(traj.lambda_n) / traj.lambda_n_initial * traj.lambda2_initial * (1.0 + rel_tol)
    margins = np.asarray(traj.lambda2) - cap
    ratio = np.asarray(traj.lambda2) / np.maximum(cap / (1.0 + rel_tol), 1e-300)
    return _report("lambda2_ratio", margins, traj.t, {"rel_tol": rel_tol},
                   {"violations": int(np.sum(margins > 0)), "max_ratio_to_cap": float(ratio.max()),
                    "eigenratio_initial": traj.lambda2_initial / traj.lambda_n_initial,
                    "eigenratio_final": float(traj.lambda2[-1] / traj.lambda_n[-1])})


def verify_invariants(traj):
    """``theta >= 0`` and nondecreasing weights (constant when not adaptive)."""
    th_min = float(traj.theta.min()) if traj.theta.size else 0.0
    dw = np.diff(traj.weights, axis=0)
    if traj.cfg.adaptive:
        w_margin = float(-dw.min()) if dw.size else 0.0
    else:
        w_margin = float(np.abs(traj.weights - traj.weights[0]).max()) if traj.weights.size else 0.0
    worst = max(-th_min, w_margin)
    return CheckReport("state_invariants", bool(worst <= 0.0), worst, 0.0, {},
                       {"theta_min": th_min, "weight_margin": w_margin})


def time_to_tolerance(t, series, tol):
    """First time after which ``series`` stays below ``tol`` (inf if never)."""
    below = np.asarray(series) < tol
    if below.size == 0 or not below[-1]:
        return math.inf
    bad = np.flatnonzero(~below)
    k = 0 if bad.size == 0 else int(bad[-1]) + 1
    return float(t[k])


def compare_convergence(p, g, x0, cfg, x_star=None, tol=1e-4, a_star=2.0, backend=None):
    """Run adaptive and frozen-weight dynamics from the same start.

    Returns
    -------
    dict
        ``time_consensus`` and ``time_distance`` for both runs (inf when
        the tolerance is not reached), their ratio, both lambda2 series and
        ``passed`` (adaptive no slower than the baseline).
    """
    from dataclasses import replace

    runs = {}
    for label, adaptive in (("adaptive", True), ("baseline", False)):
        runs[label] = simulate(p, g, x0, replace(cfg, adaptive=adaptive), a_star=a_star, backend=backend)
    out = {"tol": tol, "runs": {}}
    for label, tr in runs.items():
        entry = {
            "status": tr.status,
            "time_consensus": time_to_tolerance(tr.t, tr.consensus, tol),
            "final_lambda2": float(tr.lambda2[-1]),
            "t": tr.t.tolist(),
            "lambda2": tr.lambda2.tolist(),
        }
        if x_star is not None:
            xs = np.asarray(x_star, dtype=float).ravel()
            if xs.size == p.l:
                xs = np.tile(xs, p.n)
            dist = np.max(np.abs(tr.x.reshape(len(tr), -1) - xs), axis=1)
            entry["time_distance"] = time_to_tolerance(tr.t, dist, tol)
        out["runs"][label] = entry
    ta = out["runs"]["adaptive"]["time_consensus"]
    tb = out["runs"]["baseline"]["time_consensus"]
    out["ratio"] = ta / tb if math.isfinite(tb) and tb > 0 else (0.0 if math.isfinite(ta) else math.nan)
    out["passed"] = bool(ta <= tb)
    out["identical"] = bool(np.array_equal(runs["adaptive"].x, runs["baseline"].x)
                            if runs["adaptive"].x.shape == runs["baseline"].x.shape else False)
    out["trajectories"] = runs
    return out


def frozen_dual_decay(p, g, x0, alpha, dt=1e-3, t_end=5.0, epsilon=1.0, adaptive=True, record_every=1):
    """Primal flow (plus weights) with ``alpha`` held fixed and no constraints.

    Integrated with classical RK4 on the dense reference vector field.

    Returns
    -------
    t, dx_norm, weights : ndarray
        Record times, ``|x'|`` and edge weights at each record.
    """
    from .dynamics import SystemState, gated_rk4, primal_rhs, weight_rhs

    if p.m:
        raise DiagnosticsError("decay envelope is defined for constraint-free problems")
    n, l, ne = p.n, p.l, g.n_edges
    alpha = np.asarray(alpha, dtype=float).reshape(n, l)
    gw = g.copy()

    def parts(y):
        s = SystemState(y[:n * l].reshape(n, l), alpha, np.zeros(0), y[n * l:])
        dx = primal_rhs(s, p, gw)
        dw = weight_rhs(s, dx, gw, epsilon) if adaptive else np.zeros(ne)
        return dx, dw

    def rhs(y):
        dx, dw = parts(y)
        return np.concatenate([dx.ravel(), dw])

    y = np.concatenate([np.asarray(x0, dtype=float).ravel(), gw.weights.copy()])
    steps = int(round(t_end / dt))
    ts, norms, ws = [], [], []
    for k in range(steps + 1):
        if k % record_every == 0 or k == steps:
            dx, _ = parts(y)
            ts.append(k * dt)
            norms.append(float(np.linalg.norm(dx)))
            ws.append(y[n * l:].copy())
        if k < steps:
            y, _ = gated_rk4(rhs, y, dt)
    return np.array(ts), np.array(norms), np.array(ws)


def verify_decay_envelope(t, dx_norm, hessian_min, lambda2_initial, rel_tol=1e-3):
    """``|x'(t)| <= |x'(0)| exp(-(lambda_min(H) + lambda2_0) t) (1 + rel_tol)`` at every record.

    The exponent is ``0.5 * lambda_m0 * t`` with
    ``lambda_m0 = 2 (lambda_min(H) + lambda2(L0))``.
    """
    t = np.asarray(t, dtype=float)
    dx_norm = np.asarray(dx_norm, dtype=float)
    rate = hessian_min + lambda2_initial
    env = dx_norm[0] * np.exp(-rate * (t - t[0])) * (1.0 + rel_tol)
    margins = dx_norm - env
    worst_ratio = float(np.max(dx_norm / np.maximum(env, 1e-300)))
    return _report("decay_envelope", margins, t, {"rel_tol": rel_tol},
                   {"rate": rate, "lambda_m0": 2.0 * rate, "worst_ratio": worst_ratio,
                    "observed_rate": float(-np.polyfit(t[-len(t) // 4:], np.log(np.maximum(dx_norm[-len(t) // 4:], 1e-300)), 1)[0])
                    if len(t) >= 8 else math.nan})


def report_json(reports):
    """Serialise a list of :class:`CheckReport` (or dicts) to JSON text."""
    return json.dumps([r.to_dict() if isinstance(r, CheckReport) else _jsonable(r) for r in reports],
                      indent=2)


__all__ = [
    "CheckReport",
    "DiagnosticsError",
    "KktResidual",
    "StorageSnapshot",
    "compare_convergence",
    "frozen_dual_decay",
    "kkt_residual",
    "report_json",
    "resolve_a_star",
    "verify_decay_envelope",
    "verify_invariants",
    "verify_lambda2_ordering",
    "verify_lambda2_ratio",
    "slack",
    "storage_snapshot",
    "time_to_tolerance",
    "v_bar_series",
    "verify_lyapunov_decrease",
    "verify_passivity",
]
