"""Distributed problems built from explicit quadratic forms.

Each agent ``i`` owns an objective ``f_i`` over its local copy
``x_i in R^l`` and a list of convex inequality constraints on ``x_i``.
A constraint either acts on a single component (the general form) or,
when built with :meth:`Constraint.vector`, on the whole local vector.
"""

from dataclasses import dataclass, field

import numpy as np

from .graph import eig_symmetric


class ProblemError(ValueError):
    """Inconsistent problem data."""


@dataclass(frozen=True)
class QuadraticFunction:
    """``z -> 1/2 z'Pz + r'z + s``."""

    P: np.ndarray
    r: np.ndarray
    s: float = 0.0

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.P, dtype=float))
        r = np.atleast_1d(np.asarray(self.r, dtype=float))
        if P.shape != (r.size, r.size):
            raise ProblemError(f"P shape {P.shape} does not match r length {r.size}")
        if np.max(np.abs(P - P.T), initial=0.0) > 1e-12:
            raise ProblemError("P is not symmetric")
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "s", float(self.s))

    @property
    def dim(self):
        return self.r.size

    def value(self, z):
        z = np.asarray(z, dtype=float)
        return float(0.5 * z @ self.P @ z + self.r @ z + self.s)

    def gradient(self, z):
        return self.P @ np.asarray(z, dtype=float) + self.r

    def hessian(self):
        return self.P.copy()


@dataclass(frozen=True)
class Constraint:
    """Convex inequality ``func(x_agent) <= 0``.

    ``component`` is the single coordinate the function depends on, or
    ``None`` for an agent-local vector constraint.
    """

    agent: int
    func: QuadraticFunction
    component: int = None

    @classmethod
    def scalar(cls, agent, component, p, r, s, l):
        """``p x_k^2 + r x_k + s <= 0`` on coordinate ``k`` of agent ``i``."""
        P = np.zeros((l, l))
        P[component, component] = 2.0 * p
        q = np.zeros(l)
        q[component] = r
        return cls(int(agent), QuadraticFunction(P, q, s), int(component))

    @classmethod
    def vector(cls, agent, func):
        return cls(int(agent), func, None)


@dataclass
class ProblemSpec:
    """Per-agent objectives and constraints with convexity constants.

    Build through :func:`build_problem`, which computes ``mu`` and
    ``kappa`` from the objective blocks.
    """

    n: int
    l: int
    objectives: list
    constraints: list = field(default_factory=list)
    mu: float = 0.0
    kappa: float = 0.0
    semidefinite: bool = False

    @property
    def m(self):
        return len(self.constraints)

    def arrays(self):
        """Dense arrays consumed by the integrator kernels."""
        n, l, m = self.n, self.l, self.m
        P = np.array([f.P for f in self.objectives]).reshape(n, l, l)
        r = np.array([f.r for f in self.objectives]).reshape(n, l)
        cagent = np.array([c.agent for c in self.constraints], dtype=np.int64).reshape(m)
        cQ = np.array([c.func.P for c in self.constraints]).reshape(m, l, l)
        cq = np.array([c.func.r for c in self.constraints]).reshape(m, l)
        cc = np.array([c.func.s for c in self.constraints], dtype=float).reshape(m)
        return P, r, cagent, cQ, cq, cc

    def without_constraints(self):
        return ProblemSpec(self.n, self.l, list(self.objectives), [], self.mu,
                           self.kappa, self.semidefinite)


def build_problem(objectives, constraints=(), allow_semidefinite=False):
    """Validate blocks and compute the strong-convexity and smoothness constants.

    With ``allow_semidefinite`` the per-block minimum eigenvalue may be 0
    as long as the summed Hessian is positive definite; ``mu`` then holds
    the smallest block eigenvalue (possibly 0) and ``semidefinite`` is set.
    """
    objectives = list(objectives)
    if not objectives:
        raise ProblemError("need at least one agent")
    l = objectives[0].dim
    if any(f.dim != l for f in objectives):
        raise ProblemError("objective dimensions differ between agents")
    n = len(objectives)
    lo, hi = [], []
    for f in objectives:
        s = eig_symmetric(f.P)
        lo.append(s.lambda_min)
        hi.append(s.lambda_max)
    mu, kappa = min(lo), max(hi)
    semidefinite = False
    if mu <= 1e-12:
        if not allow_semidefinite:
            raise ProblemError(f"objective block not strongly convex (lambda_min={mu:.3g})")
        total = eig_symmetric(sum(f.P for f in objectives)).lambda_min
        if total <= 1e-12:
            raise ProblemError("summed objective Hessian is not positive definite")
        mu, semidefinite = max(mu, 0.0), True
    cons = list(constraints)
    for c in cons:
        if not 0 <= c.agent < n:
            raise ProblemError(f"constraint on unknown agent {c.agent}")
        if c.func.dim != l:
            raise ProblemError("constraint dimension does not match agents")
        if eig_symmetric(c.func.P).lambda_min < -1e-12:
            raise ProblemError("constraint is not convex")
        if c.component is not None:
            others = np.ones(l, dtype=bool)
            others[c.component] = False
            if np.any(c.func.P[others]) or np.any(c.func.P[:, others]) or np.any(c.func.r[others]):
                raise ProblemError("scalar constraint depends on more than one component")
    return ProblemSpec(n, l, objectives, cons, float(mu), float(kappa), semidefinite)


def _as_blocks(p, x):
    x = np.asarray(x, dtype=float)
    if x.size != p.n * p.l:
        raise ProblemError(f"expected {p.n * p.l} entries, got {x.size}")
    return x.reshape(p.n, p.l)


def objective_value(p, x):
    xb = _as_blocks(p, x)
    return sum(f.value(xb[i]) for i, f in enumerate(p.objectives))


def objective_gradient(p, x):
    """Stacked ``grad f_i(x_i)``; same shape as ``x``."""
    xb = _as_blocks(p, x)
    g = np.stack([f.gradient(xb[i]) for i, f in enumerate(p.objectives)])
    return g.reshape(np.shape(x))


def constraint_eval(p, x):
    """Constraint values ``(m,)`` and agent-local gradients ``(m, l)``."""
    xb = _as_blocks(p, x)
    vals = np.array([c.func.value(xb[c.agent]) for c in p.constraints], dtype=float)
    grads = np.array([c.func.gradient(xb[c.agent]) for c in p.constraints], dtype=float)
    return vals.reshape(p.m), grads.reshape(p.m, p.l)


def hessian_block(p):
    """Block-diagonal ``nl x nl`` objective Hessian."""
    h = np.zeros((p.n * p.l, p.n * p.l))
    for i, f in enumerate(p.objectives):
        h[i * p.l:(i + 1) * p.l, i * p.l:(i + 1) * p.l] = f.P
    return h


def hessian_lambda_min(p):
    return float(min(eig_symmetric(f.P).lambda_min for f in p.objectives))


__all__ = [
    "Constraint",
    "ProblemError",
    "ProblemSpec",
    "QuadraticFunction",
    "build_problem",
    "constraint_eval",
    "hessian_block",
    "hessian_lambda_min",
    "objective_gradient",
    "objective_value",
]
