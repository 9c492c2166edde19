"""Reference solvers built on direct linear algebra.

Nothing here touches the ODE code path: the consensus problems are
reduced to a single shared variable ``z`` and solved with dense
factorisations, dual projected gradient and Newton refinement.
"""

import numpy as np

from .kernels import NumericalError


def solve_consensus_unconstrained(p):
    """Minimiser of ``sum_i f_i(z)`` via ``(sum P_i) z = -sum r_i``."""
    if p.m:
        raise ValueError("problem has inequality constraints")
    H = sum(f.P for f in p.objectives)
    c = sum(f.r for f in p.objectives)
    try:
        z = np.linalg.solve(H, -c)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"singular summed Hessian: {exc}") from exc
    res = np.linalg.norm(H @ z + c)
    if res >= 1e-10 * max(1.0, np.linalg.norm(c)):
        raise NumericalError(f"linear solve residual {res:.3g}")
    return z


def solve_least_squares(A, b):
    """Normal-equations solution of ``min 1/2 |Az - b|^2``.

    Raises
    ------
    NumericalError
        If ``A`` is rank deficient (condition estimate in the message).
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).ravel()
    G = A.T @ A
    cond = np.linalg.cond(G)
    if np.linalg.matrix_rank(A) < A.shape[1] or not np.isfinite(cond) or cond > 1e14:
        raise NumericalError(f"rank-deficient system (condition estimate {cond:.3g})")
    chol = np.linalg.cholesky(G)
    y = np.linalg.solve(chol, A.T @ b)
    return np.linalg.solve(chol.T, y)


def _reduced(p):
    """Consensus reduction: objective and constraints on the shared ``z``."""
    H = sum(f.P for f in p.objectives)
    c = sum(f.r for f in p.objectives)
    Q = [con.func.P for con in p.constraints]
    q = [con.func.r for con in p.constraints]
    s = np.array([con.func.s for con in p.constraints], dtype=float)
    return H, c, Q, q, s


def _g(z, Q, q, s):
    return np.array([0.5 * z @ Qj @ z + qj @ z + sj for Qj, qj, sj in zip(Q, q, s)])


def _jac(z, Q, q):
    return np.array([Qj @ z + qj for Qj, qj in zip(Q, q)]).reshape(len(Q), z.size)


def reduced_kkt_residual(p, z, theta):
    """Max KKT violation of the consensus-reduced problem at ``(z, theta)``."""
    H, c, Q, q, s = _reduced(p)
    g = _g(z, Q, q, s)
    stat = H @ z + c + (_jac(z, Q, q).T @ theta if p.m else 0.0)
    parts = [np.max(np.abs(stat))]
    if p.m:
        parts += [max(0.0, g.max()), max(0.0, -theta.min()), np.max(np.abs(theta * g))]
    return float(max(parts))


def _newton_refine(z, lam, active, H, c, Q, q, s, iters=50):
    """Newton on stationarity plus ``g_j = 0`` for the active set."""
    A = list(active)
    for _ in range(iters):
        Jz = _jac(z, [Q[j] for j in A], [q[j] for j in A])
        stat = H @ z + c + (Jz.T @ lam if A else 0.0)
        gA = _g(z, [Q[j] for j in A], [q[j] for j in A], s[A]) if A else np.zeros(0)
        F = np.concatenate([stat, gA])
        if np.max(np.abs(F), initial=0.0) < 1e-14:
            break
        K = H + sum(lam[k] * Q[j] for k, j in enumerate(A)) if A else H
        mat = np.block([[K, Jz.T], [Jz, np.zeros((len(A), len(A)))]]) if A else K
        step = np.linalg.lstsq(mat, -F, rcond=None)[0]
        z = z + step[:z.size]
        lam = lam + step[z.size:]
    return z, lam


def solve_constrained(p, max_iter=1_000_000, tol=1e-8, active_tol=1e-9):
    """KKT point of the consensus-reduced constrained problem.

    Dual projected gradient on ``theta >= 0`` (each inner minimisation
    is a linear solve) locates the active set; Newton iterations on the
    equality-constrained KKT system of that set then polish the point.

    Returns
    -------
    x_star : ndarray (n, l)
        Replicated shared optimiser.
    theta_star : ndarray (m,)
        Multipliers, zero off the active set.

    Raises
    ------
    NumericalError
        If no KKT point within ``tol`` is found in ``max_iter`` iterations.
    """
    H, c, Q, q, s = _reduced(p)
    m = p.m
    if m == 0:
        z = solve_consensus_unconstrained(p)
        return np.tile(z, (p.n, 1)), np.zeros(0)
    theta = np.zeros(m)
    z = np.linalg.solve(H, -c)
    step = None
    last_active = None
    stable = 0
    for it in range(max_iter):
        K = H + sum(theta[j] * Q[j] for j in range(m))
        z = np.linalg.solve(K, -(c + sum(theta[j] * q[j] for j in range(m))))
        g = _g(z, Q, q, s)
        if step is None:
            # smoothness constant of the dual function near the start
            J = _jac(z, Q, q)
            kappa = max(np.linalg.norm(J, 2) ** 2 / np.linalg.eigvalsh(K)[0], 1e-12)
            step = 1.0 / kappa
        theta = np.maximum(theta + step * g, 0.0)
        active = tuple(np.flatnonzero((theta > 0) | (g > -active_tol)))
        stable = stable + 1 if active == last_active else 0
        last_active = active
        if stable >= 50 or it % 1000 == 999:
            A = [j for j in active if theta[j] > 0 or g[j] > -1e-6]
            zr, lam = _newton_refine(z.copy(), theta[A].copy(), A, H, c, Q, q, s)
            th = np.zeros(m)
            th[A] = lam
            if np.all(th >= -active_tol) and reduced_kkt_residual(p, zr, np.maximum(th, 0)) < tol:
                return np.tile(zr, (p.n, 1)), np.maximum(th, 0.0)
            if stable >= 50:
                stable = -1000
    raise NumericalError(f"no KKT point after {max_iter} iterations")


def consensus_dual(p, g, x_star, theta_star, weights=None):
    """Minimum-norm ``alpha`` with ``L alpha = -(grad f + theta grad g)`` at a consensus point."""
    from .graph import laplacian
    from .problem import constraint_eval, objective_gradient

    x = np.asarray(x_star, dtype=float).reshape(p.n, p.l)
    rhs = objective_gradient(p, x)
    if p.m:
        _, grads = constraint_eval(p, x)
        for j, con in enumerate(p.constraints):
            rhs[con.agent] += theta_star[j] * grads[j]
    lap = laplacian(g, p.l, weights)
    alpha = np.linalg.lstsq(lap, -rhs.ravel(), rcond=None)[0]
    return alpha.reshape(p.n, p.l)


def solve_linear_qp(H, c, A, b, tol=1e-10):
    """``min 1/2 z'Hz + c'z  s.t.  A z <= b`` for tiny convex problems.

    SLSQP finds the active set; a minimum-norm solve of the equality KKT
    system on that set polishes primal and multipliers.
    """
    from scipy.optimize import minimize

    H, c, A, b = (np.asarray(v, dtype=float) for v in (H, c, A, b))
    res = minimize(lambda z: 0.5 * z @ H @ z + c @ z, np.zeros(c.size), jac=lambda z: H @ z + c,
                   constraints=[{"type": "ineq", "fun": lambda z: b - A @ z, "jac": lambda z: -A}],
                   method="SLSQP", options={"ftol": 1e-15, "maxiter": 1000})
    z = res.x
    act = np.flatnonzero(A @ z - b > -1e-6)
    Aa = A[act]
    n = c.size
    mat = np.block([[H, Aa.T], [Aa, np.zeros((act.size, act.size))]])
    sol = np.linalg.lstsq(mat, np.concatenate([-c, b[act]]), rcond=None)[0]
    z = sol[:n]
    lam = np.zeros(A.shape[0])
    lam[act] = sol[n:]
    viol = max(np.max(A @ z - b, initial=0.0), max(0.0, -lam.min(initial=0.0)),
               np.max(np.abs(H @ z + c + A.T @ lam)))
    if viol > 1e-8:
        raise NumericalError(f"QP polish failed (violation {viol:.3g})")
    return z, lam


__all__ = [
    "consensus_dual",
    "reduced_kkt_residual",
    "solve_consensus_unconstrained",
    "solve_constrained",
    "solve_least_squares",
    "solve_linear_qp",
]
