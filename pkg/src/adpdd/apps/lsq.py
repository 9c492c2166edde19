"""Distributed (box-constrained) least squares.

Rows of ``A`` are split into consecutive blocks, one block per agent, and
agent ``i`` minimises ``1/2 |A_i z - b_i|^2``.  Individual blocks may be
rank deficient; only the stacked ``A`` needs full column rank.
"""

import numpy as np

from ..graph import ring_graph
from ..problem import Constraint, ProblemError, QuadraticFunction, build_problem
from ..seeding import substream
from .common import Experiment


def split_rows(r1, n, rows=None):
    """Row counts per agent; equal split unless ``rows`` is given."""
    if rows is None:
        if r1 % n:
            raise ProblemError(f"{r1} rows do not split evenly over {n} agents")
        return [r1 // n] * n
    rows = [int(k) for k in rows]
    if len(rows) != n or sum(rows) != r1 or min(rows) < 1:
        raise ProblemError("row counts must be positive, one per agent, summing to the row total")
    return rows


def _objectives(A, b, n, rows):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).ravel()
    if A.shape[0] != b.size:
        raise ProblemError(f"A has {A.shape[0]} rows but b has {b.size} entries")
    counts = split_rows(A.shape[0], n, rows)
    out = []
    start = 0
    for k in counts:
        Ai, bi = A[start:start + k], b[start:start + k]
        out.append(QuadraticFunction(Ai.T @ Ai, -Ai.T @ bi, 0.5 * bi @ bi))
        start += k
    return out


def _check_graph(g, n):
    if g is not None and g.n != n:
        raise ProblemError(f"graph has {g.n} agents, problem has {n}")


def build_distributed_lsq(A, b, n, g=None, rows=None):
    """One least-squares block per agent, no inequality constraints."""
    _check_graph(g, n)
    return build_problem(_objectives(A, b, n, rows), allow_semidefinite=True)


def build_box_constrained_lsq(A, b, x_lo, x_hi, n, g=None, rows=None):
    """Least squares plus ``(z_k - centre_k)^2 - radius_k^2 <= 0`` on every agent and component."""
    _check_graph(g, n)
    lo = np.asarray(x_lo, dtype=float).ravel()
    hi = np.asarray(x_hi, dtype=float).ravel()
    cols = np.atleast_2d(A).shape[1]
    if lo.size == 1:
        lo = np.full(cols, lo[0])
    if hi.size == 1:
        hi = np.full(cols, hi[0])
    if lo.size != cols or hi.size != cols:
        raise ProblemError("box bounds must have one entry per column")
    if np.any(lo >= hi):
        raise ProblemError("empty box: every lower bound must be below its upper bound")
    centre, radius = 0.5 * (lo + hi), 0.5 * (hi - lo)
    cons = [Constraint.scalar(i, k, 1.0, -2.0 * centre[k], centre[k] ** 2 - radius[k] ** 2, cols)
            for i in range(n) for k in range(cols)]
    return build_problem(_objectives(A, b, n, rows), cons, allow_semidefinite=True)


def random_system(rng, r1, r2):
    """Gaussian ``A`` (r1 x r2) and ``b``."""
    return rng.standard_normal((r1, r2)), rng.standard_normal(r1)


def lsq_experiment(seed=0, r1=100, r2=80, n=4, gains=0.1, random_start=False):
    """Random 100 x 80 system over a 4-agent ring.

    The primal start is zero unless ``random_start``; with a Gaussian start
    the weight growth in the first instants makes the flow very stiff.
    """
    A, b = random_system(substream(seed, "lsq.system"), r1, r2)
    g = ring_graph(n, gains=gains)
    p = build_distributed_lsq(A, b, n, g)
    x0 = substream(seed, "x0").standard_normal((n, r2)) if random_start else np.zeros((n, r2))
    return Experiment("lsq", p, g, x0, {"A": A, "b": b, "seed": seed})


def box_lsq_experiment(seed=0, r1=20, r2=4, n=4, gains=2.0, bounds=(-0.2, 0.2), random_start=False):
    """Random 20 x 4 system with a box on every component, 4-agent ring (zero start by default)."""
    A, b = random_system(substream(seed, "qlsq.system"), r1, r2)
    g = ring_graph(n, gains=gains)
    p = build_box_constrained_lsq(A, b, bounds[0], bounds[1], n, g)
    x0 = substream(seed, "x0").standard_normal((n, r2)) if random_start else np.zeros((n, r2))
    return Experiment("qlsq", p, g, x0, {"A": A, "b": b, "bounds": list(bounds), "seed": seed})
