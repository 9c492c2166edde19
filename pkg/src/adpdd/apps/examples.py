"""The two academic test problems.

``example1``: three agents in the plane, each with a coupled quadratic
objective and one ellipse constraint.  ``example2``: ten scalar agents with
fixed curvatures and seeded minimisers on a random connected graph.
"""

import numpy as np

from ..graph import build_graph, complete_graph, path_graph, random_connected_graph
from ..problem import Constraint, QuadraticFunction, build_problem
from ..seeding import substream
from .common import Experiment

EXAMPLE2_CURVATURES = np.array([136, 439, 355, 298, 302, 350, 327, 398, 353, 294], dtype=float)

# f1 = (a-b)^2 + (a-1)^2, f2 = (a-b)^2/3 + (a-3)^2, f3 = (a-b)^2/3 + (a-6)^2
_E1_TARGETS = (1.0, 3.0, 6.0)
_E1_COUPLING = (1.0, 1.0 / 3.0, 1.0 / 3.0)
# g = u a^2 + v b^2 - w on each agent's own pair
_E1_ELLIPSES = ((6.0, 3.0, 11.0), (7.0, 11.0, 7.0), (2.0, 9.0, 20.0))


def example1_problem(constrained=True):
    objs = []
    for kappa, target in zip(_E1_COUPLING, _E1_TARGETS):
        P = 2.0 * np.array([[kappa + 1.0, -kappa], [-kappa, kappa]])
        objs.append(QuadraticFunction(P, [-2.0 * target, 0.0], target ** 2))
    cons = []
    if constrained:
        for i, (u, v, w) in enumerate(_E1_ELLIPSES):
            cons.append(Constraint.vector(i, QuadraticFunction(np.diag([2.0 * u, 2.0 * v]), [0.0, 0.0], -w)))
    return build_problem(objs, cons)


def build_example1(topology="path", gains=0.1, constrained=True):
    """Problem and graph; ``topology`` is ``"path"`` (0-1-2) or ``"complete"``."""
    p = example1_problem(constrained)
    if topology == "path":
        g = path_graph(3, gains=gains)
    elif topology == "complete":
        g = complete_graph(3, gains=gains)
    else:
        raise ValueError(f"unknown topology {topology!r}")
    return p, g


def example1_experiment(seed=0, topology="path", gains=0.1, constrained=True):
    p, g = build_example1(topology, gains, constrained)
    x0 = substream(seed, "x0").standard_normal((3, 2))
    return Experiment("example1", p, g, x0, {"topology": topology, "seed": seed})


def build_example2(seed=0, gains=0.001, edge_prob=0.3, target_range=(0.0, 10.0)):
    """Ten agents, ``f_i = h_i (z - c_i)^2 / 2``, seeded ``c_i`` and random graph.

    Returns
    -------
    problem, graph, targets
    """
    c = substream(seed, "example2.targets").uniform(*target_range, size=EXAMPLE2_CURVATURES.size)
    objs = [QuadraticFunction([[h]], [-h * ci], 0.5 * h * ci * ci) for h, ci in zip(EXAMPLE2_CURVATURES, c)]
    g = random_connected_graph(EXAMPLE2_CURVATURES.size, substream(seed, "example2.graph"),
                               edge_prob=edge_prob, gains=gains)
    return build_problem(objs), g, c


def example2_experiment(seed=0, gains=0.001, edge_prob=0.3):
    p, g, c = build_example2(seed, gains, edge_prob)
    x0 = substream(seed, "x0").standard_normal((p.n, 1))
    return Experiment("example2", p, g, x0, {"targets": c.tolist(), "seed": seed, "edge_prob": edge_prob})


__all__ = [
    "EXAMPLE2_CURVATURES",
    "build_example1",
    "build_example2",
    "build_graph",
    "example1_experiment",
    "example1_problem",
    "example2_experiment",
]
