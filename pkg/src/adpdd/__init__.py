"""Simulation and analysis of adaptively synchronised distributed primal-dual dynamics."""

from ._backend import BACKEND
from .dynamics import DivergenceError, SimConfig, SystemState, Trajectory, simulate, step
from .graph import Graph, build_graph, eig_symmetric, incidence, laplacian
from .problem import Constraint, ProblemSpec, QuadraticFunction, build_problem

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "Constraint",
    "DivergenceError",
    "Graph",
    "ProblemSpec",
    "QuadraticFunction",
    "SimConfig",
    "SystemState",
    "Trajectory",
    "build_graph",
    "build_problem",
    "eig_symmetric",
    "incidence",
    "laplacian",
    "simulate",
    "step",
]
