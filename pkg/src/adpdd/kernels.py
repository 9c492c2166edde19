"""Hot numeric kernels: cyclic Jacobi eigensolver and the gated RK4 integrator.

Every kernel exists twice: a loop version compiled with numba and a
vectorised numpy version.  ``ADPDD_BACKEND`` picks which one the public
wrappers call; both are importable directly so they can be cross-checked.

Array conventions used by the integrator
----------------------------------------
x, alpha : (n, l)        primal variables and consensus duals
theta    : (m,)          inequality duals
w        : (E,)          live coupling weights
P, r     : (n, l, l), (n, l)      per-agent objective  1/2 z'Pz + r'z
edges    : (E, 2) int64           lower index first
cagent   : (m,) int64             owning agent of constraint j
cQ, cq, cc : (m, l, l), (m, l), (m,)   constraint 1/2 z'Qz + q'z + c on x_i

Disturbance codes: target 0 none, 1 H1, 2 H2, 3 H3; kind 0 none,
1 sinusoid, 2 step, 3 white (piecewise constant, samples in ``noise``).
"""

import math

import numpy as np

from ._backend import BACKEND, HAVE_NUMBA, njit

STATUS_HORIZON = 0
STATUS_CONVERGED = 1
STATUS_DIVERGED = 2

# cumulative quantities carried in each record's ``ports`` row
PORT_H1, PORT_H2, PORT_H3, PORT_Y2, PORT_U2 = range(5)
N_PORTS = 5
N_KKT = 5


class NumericalError(RuntimeError):
    """An iterative kernel failed to converge."""


# ----------------------------------------------------------------------------
# Jacobi eigensolver
# ----------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def _jacobi_nb(a, tol, max_sweeps):
    n = a.shape[0]
    a = a.copy()
    v = np.eye(n)
    scale = 0.0
    for i in range(n):
        for j in range(n):
            scale += a[i, j] * a[i, j]
    thresh = tol * max(1.0, math.sqrt(scale))
    sweeps = 0
    converged = False
    while sweeps <= max_sweeps:
        off = 0.0
        for i in range(n):
            for j in range(n):
                if i != j:
                    off += a[i, j] * a[i, j]
        if math.sqrt(off) < thresh:
            converged = True
            break
        if sweeps == max_sweeps:
            break
        sweeps += 1
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                # negligible next to both diagonal entries: drop it
                g = 100.0 * abs(apq)
                if apq == 0.0 or (abs(a[p, p]) + g == abs(a[p, p]) and abs(a[q, q]) + g == abs(a[q, q])):
                    a[p, q] = 0.0
                    a[q, p] = 0.0
                    continue
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(tau) > 1e150:
                    t = 0.5 / tau
                elif tau >= 0.0:
                    t = 1.0 / (tau + math.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                for k in range(n):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp - s * akq
                    a[k, q] = s * akp + c * akq
                for k in range(n):
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = c * apk - s * aqk
                    a[q, k] = s * apk + c * aqk
                for k in range(n):
                    vkp = v[k, p]
                    vkq = v[k, q]
                    v[k, p] = c * vkp - s * vkq
                    v[k, q] = s * vkp + c * vkq
    d = np.empty(n)
    for i in range(n):
        d[i] = a[i, i]
    order = np.argsort(d)
    return d[order], v[:, order], sweeps, converged


def _jacobi_np(a, tol, max_sweeps):
    a = np.array(a, dtype=float, copy=True)
    n = a.shape[0]
    v = np.eye(n)
    thresh = tol * max(1.0, np.linalg.norm(a))
    sweeps = 0
    converged = False
    while sweeps <= max_sweeps:
        off = np.linalg.norm(a - np.diag(np.diag(a)))
        if off < thresh:
            converged = True
            break
        if sweeps == max_sweeps:
            break
        sweeps += 1
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                g = 100.0 * abs(apq)
                if apq == 0.0 or (abs(a[p, p]) + g == abs(a[p, p]) and abs(a[q, q]) + g == abs(a[q, q])):
                    a[p, q] = a[q, p] = 0.0
                    continue
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(tau) > 1e150:
                    t = 0.5 / tau
                else:
                    t = (1.0 if tau >= 0 else -1.0) / (abs(tau) + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                colp = a[:, p].copy()
                a[:, p] = c * colp - s * a[:, q]
                a[:, q] = s * colp + c * a[:, q]
                rowp = a[p, :].copy()
                a[p, :] = c * rowp - s * a[q, :]
                a[q, :] = s * rowp + c * a[q, :]
                vp = v[:, p].copy()
                v[:, p] = c * vp - s * v[:, q]
                v[:, q] = s * vp + c * v[:, q]
    d = np.diag(a).copy()
    order = np.argsort(d, kind="stable")
    return d[order], v[:, order], sweeps, converged


def jacobi_eigh(a, tol=1e-12, max_sweeps=100, backend=None):
    """Eigen-decomposition of a dense symmetric matrix by cyclic Jacobi.

    Converges when the off-diagonal Frobenius norm drops below
    ``tol * max(1, ||a||_F)``.

    Returns
    -------
    eigenvalues : ndarray, ascending
    eigenvectors : ndarray, columns matching ``eigenvalues``
    sweeps : int

    Raises
    ------
    NumericalError
        If ``max_sweeps`` sweeps do not reach the tolerance.
    """
    a = np.ascontiguousarray(a, dtype=float)
    fn = _jacobi_nb if (backend or BACKEND) == "numba" else _jacobi_np
    d, v, sweeps, ok = fn(a, float(tol), int(max_sweeps))
    if not ok:
        raise NumericalError(f"Jacobi did not converge after {sweeps} sweeps")
    return d, v, int(sweeps)


# ----------------------------------------------------------------------------
# disturbance signals
# ----------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def _dist_scalar(t, kind, amp, freq, t_on, t0, t1, hold):
    """Scalar envelope of the disturbance; index into noise for white."""
    if kind == 0 or t < t0 or t >= t1:
        return 0.0, -1
    if kind == 1:
        return amp * math.sin(2.0 * math.pi * freq * (t - t0)), -1
    if kind == 2:
        return (amp if t >= t_on else 0.0), -1
    return amp, int((t - t0) / hold)


@njit(cache=True, nogil=True)
def _dist_fill(t, kind, amp, freq, t_on, t0, t1, direction, noise, hold, out):
    s, idx = _dist_scalar(t, kind, amp, freq, t_on, t0, t1, hold)
    n, l = out.shape
    if idx >= 0:
        if idx >= noise.shape[0]:
            idx = noise.shape[0] - 1
        for i in range(n):
            for k in range(l):
                out[i, k] = s * noise[idx, i, k]
    else:
        for i in range(n):
            for k in range(l):
                out[i, k] = s * direction[i, k]


def _dist_np(t, kind, amp, freq, t_on, t0, t1, direction, noise, hold):
    if kind == 0 or t < t0 or t >= t1:
        return np.zeros_like(direction)
    if kind == 1:
        return amp * math.sin(2.0 * math.pi * freq * (t - t0)) * direction
    if kind == 2:
        return (amp if t >= t_on else 0.0) * direction
    idx = min(int((t - t0) / hold), noise.shape[0] - 1)
    return amp * noise[idx]


# ----------------------------------------------------------------------------
# numba integrator
# ----------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def _laplace_apply(w, edges, v, out):
    n, l = v.shape
    for i in range(n):
        for k in range(l):
            out[i, k] = 0.0
    for e in range(edges.shape[0]):
        i = edges[e, 0]
        q = edges[e, 1]
        for k in range(l):
            d = w[e] * (v[i, k] - v[q, k])
            out[i, k] += d
            out[q, k] -= d


@njit(cache=True, nogil=True)
def _stage_nb(x, al, th, w, P, r, edges, gains, cagent, cQ, cq, cc, eps, adaptive,
              target, du, dx, dal, dth, dw, act, gval, ggrad, lx, la, yh3):
    n, l = x.shape
    m = th.shape[0]
    _laplace_apply(w, edges, x, lx)
    _laplace_apply(w, edges, al, la)
    for i in range(n):
        for k in range(l):
            yh3[i, k] = 0.0
    for j in range(m):
        i = cagent[j]
        g = cc[j]
        for k in range(l):
            s = cq[j, k]
            for kk in range(l):
                z = x[i, kk] + du[i, kk] if target == 3 else x[i, kk]
                s += cQ[j, k, kk] * z
            ggrad[j, k] = s
            zk = x[i, k] + du[i, k] if target == 3 else x[i, k]
            g += 0.5 * (s - cq[j, k]) * zk + cq[j, k] * zk
            yh3[i, k] += th[j] * s
        gval[j] = g
        if th[j] > 0.0 or g > 0.0:
            dth[j] = g
            act[j] = True
        else:
            dth[j] = 0.0
            act[j] = False
    for i in range(n):
        for k in range(l):
            s = r[i, k]
            for kk in range(l):
                s += P[i, k, kk] * x[i, kk]
            dx[i, k] = -s - lx[i, k] - la[i, k] - yh3[i, k]
            dal[i, k] = lx[i, k]
            if target == 1:
                dx[i, k] += du[i, k]
            elif target == 2:
                dal[i, k] += du[i, k]
    for e in range(edges.shape[0]):
        s = 0.0
        if adaptive:
            i = edges[e, 0]
            q = edges[e, 1]
            for k in range(l):
                a = x[i, k] - x[q, k]
                b = dx[i, k] - dx[q, k]
                s += a * a + b * b
        dw[e] = eps * gains[e] * s


@njit(cache=True, nogil=True)
def _ports_nb(x, al, th, w, edges, cagent, cQ, target, du, ddu,
              dx, dal, dth, dw, ggrad, out, tmp1, tmp2, y3, u3):
    """Port powers and energies at one point; fills ``out`` (N_PORTS,)."""
    n, l = x.shape
    m = th.shape[0]
    # u3dot = xdot (+ disturbance derivative on H3)
    for i in range(n):
        for k in range(l):
            u3[i, k] = dx[i, k] + (ddu[i, k] if target == 3 else 0.0)
            y3[i, k] = 0.0
    for j in range(m):
        i = cagent[j]
        for k in range(l):
            s = 0.0
            for kk in range(l):
                s += cQ[j, k, kk] * u3[i, kk]
            y3[i, k] += dth[j] * ggrad[j, k] + th[j] * s
    p1 = 0.0
    p2 = 0.0
    p3 = 0.0
    ey = 0.0
    eu = 0.0
    # u1dot = -L alphadot - Ldot alpha - y3dot (+ ddu on H1)
    _laplace_apply(w, edges, dal, tmp1)
    _laplace_apply(dw, edges, al, tmp2)
    for i in range(n):
        for k in range(l):
            u1 = -tmp1[i, k] - tmp2[i, k] - y3[i, k]
            if target == 1:
                u1 += ddu[i, k]
            p1 += dx[i, k] * u1
    # u2dot = L xdot + Ldot x (+ ddu on H2)
    _laplace_apply(w, edges, dx, tmp1)
    _laplace_apply(dw, edges, x, tmp2)
    for i in range(n):
        for k in range(l):
            u2 = tmp1[i, k] + tmp2[i, k]
            if target == 2:
                u2 += ddu[i, k]
            p2 += dal[i, k] * u2
            p3 += y3[i, k] * u3[i, k]
            ey += dx[i, k] * dx[i, k] + dal[i, k] * dal[i, k] + y3[i, k] * y3[i, k]
            if target != 0:
                eu += ddu[i, k] * ddu[i, k]
    out[0] = p1
    out[1] = p2
    out[2] = p3
    out[3] = ey
    out[4] = eu


@njit(cache=True, nogil=True)
def _kkt_nb(x, al, th, w, P, r, edges, gval, ggrad, cagent, out, tmp):
    n, l = x.shape
    _laplace_apply(w, edges, al, tmp)
    for j in range(th.shape[0]):
        i = cagent[j]
        for k in range(l):
            tmp[i, k] += th[j] * ggrad[j, k]
    stat = 0.0
    for i in range(n):
        for k in range(l):
            s = r[i, k] + tmp[i, k]
            for kk in range(l):
                s += P[i, k, kk] * x[i, kk]
            stat = max(stat, abs(s))
    feas = 0.0
    dual = 0.0
    comp = 0.0
    for j in range(th.shape[0]):
        feas = max(feas, gval[j])
        dual = max(dual, -th[j])
        comp = max(comp, abs(th[j] * gval[j]))
    cons = 0.0
    for e in range(edges.shape[0]):
        for k in range(l):
            cons = max(cons, abs(x[edges[e, 0], k] - x[edges[e, 1], k]))
    out[0] = stat
    out[1] = feas
    out[2] = dual
    out[3] = comp
    out[4] = cons


@njit(cache=True, nogil=True)
def _integrate_nb(x, al, th, w, t0, P, r, edges, gains, cagent, cQ, cq, cc,
                  eps, adaptive, dt, nsteps, record_every, tol, check_after,
                  target, kind, amp, freq, t_on, win0, win1, direction, noise, hold,
                  rec_t, rec_x, rec_al, rec_th, rec_w, rec_dx, rec_dal, rec_dth,
                  rec_dw, rec_act, rec_ports, rec_kkt, rec_du, rec_ddu):
    n, l = x.shape
    m = th.shape[0]
    ne = w.shape[0]
    x = x.copy()
    al = al.copy()
    th = th.copy()
    w = w.copy()
    kx = np.zeros((4, n, l))
    ka = np.zeros((4, n, l))
    kt = np.zeros((4, m))
    kw = np.zeros((4, ne))
    act = np.zeros(m, dtype=np.bool_)
    act_s = np.zeros(m, dtype=np.bool_)
    gval = np.zeros(m)
    ggrad = np.zeros((m, l))
    gval_s = np.zeros(m)
    ggrad_s = np.zeros((m, l))
    lx = np.zeros((n, l))
    la = np.zeros((n, l))
    yh3 = np.zeros((n, l))
    tmp2 = np.zeros((n, l))
    u3 = np.zeros((n, l))
    xs = np.zeros((n, l))
    als = np.zeros((n, l))
    ths = np.zeros(m)
    ws = np.zeros(ne)
    du = np.zeros((n, l))
    dup = np.zeros((n, l))
    dum = np.zeros((n, l))
    ddu = np.zeros((n, l))
    ports = np.zeros(N_PORTS)
    ports_prev = np.zeros(N_PORTS)
    cum = np.zeros(N_PORTS)
    kkt = np.zeros(N_KKT)
    half = np.array([0.0, 0.5, 0.5, 1.0])
    status = STATUS_HORIZON
    fail_step = -1
    fail_comp = -1
    nrec = 0
    step = 0
    while True:
        t = t0 + step * dt
        # stage 1 at the current state
        _dist_fill(t, kind, amp, freq, t_on, win0, win1, direction, noise, hold, du)
        _stage_nb(x, al, th, w, P, r, edges, gains, cagent, cQ, cq, cc, eps, adaptive,
                  target, du, kx[0], ka[0], kt[0], kw[0], act, gval, ggrad, lx, la, yh3)
        if target != 0:
            _dist_fill(t + 0.5 * dt, kind, amp, freq, t_on, win0, win1, direction, noise, hold, dup)
            _dist_fill(t - 0.5 * dt, kind, amp, freq, t_on, win0, win1, direction, noise, hold, dum)
            for i in range(n):
                for k in range(l):
                    ddu[i, k] = (dup[i, k] - dum[i, k]) / dt
        _ports_nb(x, al, th, w, edges, cagent, cQ, target, du, ddu,
                  kx[0], ka[0], kt[0], kw[0], ggrad, ports, lx, tmp2, yh3, u3)
        if step > 0:
            for c in range(N_PORTS):
                cum[c] += 0.5 * dt * (ports_prev[c] + ports[c])
        for c in range(N_PORTS):
            ports_prev[c] = ports[c]
        last = step == nsteps
        on_grid = step % record_every == 0
        converged = False
        if on_grid or last:
            _kkt_nb(x, al, th, w, P, r, edges, gval, ggrad, cagent, kkt, lx)
            worst = 0.0
            for c in range(N_KKT):
                worst = max(worst, kkt[c])
            if tol > 0.0 and t >= check_after and step > 0 and worst < tol:
                converged = True
            rec_t[nrec] = t
            rec_x[nrec] = x
            rec_al[nrec] = al
            rec_th[nrec] = th
            rec_w[nrec] = w
            rec_dx[nrec] = kx[0]
            rec_dal[nrec] = ka[0]
            rec_dth[nrec] = kt[0]
            rec_dw[nrec] = kw[0]
            rec_act[nrec] = act
            rec_ports[nrec] = cum
            rec_kkt[nrec] = kkt
            rec_du[nrec] = du
            rec_ddu[nrec] = ddu
            nrec += 1
        if converged:
            status = STATUS_CONVERGED
            break
        if last:
            break
        # remaining RK4 stages on the joint (x, alpha, theta, w) state
        for s in range(1, 4):
            h = half[s] * dt
            for i in range(n):
                for k in range(l):
                    xs[i, k] = x[i, k] + h * kx[s - 1, i, k]
                    als[i, k] = al[i, k] + h * ka[s - 1, i, k]
            for j in range(m):
                ths[j] = th[j] + h * kt[s - 1, j]
            for e in range(ne):
                ws[e] = w[e] + h * kw[s - 1, e]
            if target != 0:
                _dist_fill(t + h, kind, amp, freq, t_on, win0, win1, direction, noise, hold, du)
            _stage_nb(xs, als, ths, ws, P, r, edges, gains, cagent, cQ, cq, cc, eps, adaptive,
                      target, du, kx[s], ka[s], kt[s], kw[s], act_s, gval_s, ggrad_s, lx, la, yh3)
        c6 = dt / 6.0
        for i in range(n):
            for k in range(l):
                x[i, k] += c6 * (kx[0, i, k] + 2.0 * kx[1, i, k] + 2.0 * kx[2, i, k] + kx[3, i, k])
                al[i, k] += c6 * (ka[0, i, k] + 2.0 * ka[1, i, k] + 2.0 * ka[2, i, k] + ka[3, i, k])
        for j in range(m):
            v = th[j] + c6 * (kt[0, j] + 2.0 * kt[1, j] + 2.0 * kt[2, j] + kt[3, j])
            th[j] = v if v > 0.0 else 0.0
            if v != v:
                th[j] = v
        for e in range(ne):
            w[e] += c6 * (kw[0, e] + 2.0 * kw[1, e] + 2.0 * kw[2, e] + kw[3, e])
        step += 1
        bad = -1
        for i in range(n):
            for k in range(l):
                if bad < 0 and not np.isfinite(x[i, k]):
                    bad = i * l + k
        for i in range(n):
            for k in range(l):
                if bad < 0 and not np.isfinite(al[i, k]):
                    bad = n * l + i * l + k
        for j in range(m):
            if bad < 0 and not np.isfinite(th[j]):
                bad = 2 * n * l + j
        for e in range(ne):
            if bad < 0 and not np.isfinite(w[e]):
                bad = 2 * n * l + m + e
        if bad >= 0:
            status = STATUS_DIVERGED
            fail_step = step
            fail_comp = bad
            break
    return x, al, th, w, nrec, status, fail_step, fail_comp


# ----------------------------------------------------------------------------
# numpy integrator
# ----------------------------------------------------------------------------


def _incidence(edges, n):
    m = np.zeros((n, edges.shape[0]))
    ar = np.arange(edges.shape[0])
    m[edges[:, 0], ar] = 1.0
    m[edges[:, 1], ar] = -1.0
    return m


class _NumpyModel:
    """Vectorised right-hand side shared by every step of one integration."""

    def __init__(self, P, r, edges, gains, cagent, cQ, cq, cc, eps, adaptive, target, n):
        self.P, self.r, self.edges = P, r, edges
        self.gains, self.cQ, self.cq, self.cc = gains, cQ, cq, cc
        self.cagent = cagent
        self.eps, self.adaptive, self.target = eps, adaptive, target
        self.B = _incidence(edges, n)
        self.S = np.zeros((n, cagent.shape[0]))
        self.S[cagent, np.arange(cagent.shape[0])] = 1.0

    def lap(self, w, v):
        return self.B @ (w[:, None] * (self.B.T @ v))

    def stage(self, x, al, th, w, du):
        t = self.target
        lx = self.lap(w, x)
        la = self.lap(w, al)
        z = (x + du if t == 3 else x)[self.cagent]
        qz = np.einsum("jkl,jl->jk", self.cQ, z)
        ggrad = qz + self.cq
        gval = 0.5 * np.sum(qz * z, axis=1) + np.sum(self.cq * z, axis=1) + self.cc
        yh3 = self.S @ (th[:, None] * ggrad)
        act = (th > 0.0) | (gval > 0.0)
        dth = np.where(act, gval, 0.0)
        dx = -(np.einsum("ikl,il->ik", self.P, x) + self.r) - lx - la - yh3
        dal = lx.copy()
        if t == 1:
            dx = dx + du
        elif t == 2:
            dal = dal + du
        if self.adaptive:
            e = self.B.T @ x
            ed = self.B.T @ dx
            dw = self.eps * self.gains * (np.sum(e * e, axis=1) + np.sum(ed * ed, axis=1))
        else:
            dw = np.zeros_like(w)
        return dx, dal, dth, dw, act, gval, ggrad

    def ports(self, x, al, th, w, ddu, dx, dal, dth, dw, ggrad):
        t = self.target
        u3 = dx + ddu if t == 3 else dx
        y3 = self.S @ (dth[:, None] * ggrad + th[:, None] * np.einsum("jkl,jl->jk", self.cQ, u3[self.cagent]))
        u1 = -self.lap(w, dal) - self.lap(dw, al) - y3
        u2 = self.lap(w, dx) + self.lap(dw, x)
        if t == 1:
            u1 = u1 + ddu
        elif t == 2:
            u2 = u2 + ddu
        eu = float(np.sum(ddu * ddu)) if t != 0 else 0.0
        return np.array([
            np.sum(dx * u1), np.sum(dal * u2), np.sum(y3 * u3),
            np.sum(dx * dx) + np.sum(dal * dal) + np.sum(y3 * y3), eu,
        ])

    def kkt(self, x, al, th, w, gval, ggrad):
        stat = np.einsum("ikl,il->ik", self.P, x) + self.r + self.lap(w, al) + self.S @ (th[:, None] * ggrad)
        e = self.B.T @ x
        m = th.shape[0]
        return np.array([
            np.max(np.abs(stat)) if stat.size else 0.0,
            max(0.0, float(np.max(gval))) if m else 0.0,
            max(0.0, float(-np.min(th))) if m else 0.0,
            float(np.max(np.abs(th * gval))) if m else 0.0,
            float(np.max(np.abs(e))) if e.size else 0.0,
        ])


def _integrate_np(x, al, th, w, t0, P, r, edges, gains, cagent, cQ, cq, cc,
                  eps, adaptive, dt, nsteps, record_every, tol, check_after,
                  target, kind, amp, freq, t_on, win0, win1, direction, noise, hold,
                  rec_t, rec_x, rec_al, rec_th, rec_w, rec_dx, rec_dal, rec_dth,
                  rec_dw, rec_act, rec_ports, rec_kkt, rec_du, rec_ddu):
    n, l = x.shape
    model = _NumpyModel(P, r, edges, gains, cagent, cQ, cq, cc, eps, adaptive, target, n)
    x, al, th, w = x.copy(), al.copy(), th.copy(), w.copy()

    def dist(tt):
        if target == 0:
            return np.zeros((n, l))
        return _dist_np(tt, kind, amp, freq, t_on, win0, win1, direction, noise, hold)

    cum = np.zeros(N_PORTS)
    prev = None
    nrec = 0
    step = 0
    status, fail_step, fail_comp = STATUS_HORIZON, -1, -1
    while True:
        t = t0 + step * dt
        du = dist(t)
        k1 = model.stage(x, al, th, w, du)
        ddu = (dist(t + 0.5 * dt) - dist(t - 0.5 * dt)) / dt if target != 0 else np.zeros((n, l))
        pw = model.ports(x, al, th, w, ddu, k1[0], k1[1], k1[2], k1[3], k1[6])
        if prev is not None:
            cum = cum + 0.5 * dt * (prev + pw)
        prev = pw
        last = step == nsteps
        converged = False
        if step % record_every == 0 or last:
            kkt = model.kkt(x, al, th, w, k1[5], k1[6])
            if tol > 0.0 and t >= check_after and step > 0 and kkt.max() < tol:
                converged = True
            rec_t[nrec] = t
            rec_x[nrec], rec_al[nrec], rec_th[nrec], rec_w[nrec] = x, al, th, w
            rec_dx[nrec], rec_dal[nrec], rec_dth[nrec], rec_dw[nrec] = k1[0], k1[1], k1[2], k1[3]
            rec_act[nrec] = k1[4]
            rec_ports[nrec] = cum
            rec_kkt[nrec] = kkt
            rec_du[nrec] = du
            rec_ddu[nrec] = ddu
            nrec += 1
        if converged:
            status = STATUS_CONVERGED
            break
        if last:
            break
        ks = [k1]
        for h in (0.5 * dt, 0.5 * dt, dt):
            kp = ks[-1]
            ks.append(model.stage(x + h * kp[0], al + h * kp[1], th + h * kp[2], w + h * kp[3],
                                  dist(t + h) if target != 0 else du))
        c6 = dt / 6.0
        x = x + c6 * (ks[0][0] + 2.0 * ks[1][0] + 2.0 * ks[2][0] + ks[3][0])
        al = al + c6 * (ks[0][1] + 2.0 * ks[1][1] + 2.0 * ks[2][1] + ks[3][1])
        thn = th + c6 * (ks[0][2] + 2.0 * ks[1][2] + 2.0 * ks[2][2] + ks[3][2])
        th = np.where(np.isnan(thn), thn, np.maximum(thn, 0.0))
        w = w + c6 * (ks[0][3] + 2.0 * ks[1][3] + 2.0 * ks[2][3] + ks[3][3])
        step += 1
        flat = np.concatenate([x.ravel(), al.ravel(), th, w])
        bad = np.flatnonzero(~np.isfinite(flat))
        if bad.size:
            status, fail_step, fail_comp = STATUS_DIVERGED, step, int(bad[0])
            break
    return x, al, th, w, nrec, status, fail_step, fail_comp


def integrate(*args, backend=None):
    """Run the gated RK4 integrator; see module docstring for the layout."""
    fn = _integrate_nb if (backend or BACKEND) == "numba" else _integrate_np
    return fn(*args)


__all__ = [
    "BACKEND",
    "HAVE_NUMBA",
    "NumericalError",
    "integrate",
    "jacobi_eigh",
]
