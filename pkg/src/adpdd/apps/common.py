"""Shared container for builder outputs."""

from dataclasses import dataclass, field

import numpy as np


@dataclass
class Experiment:
    """A ready-to-run problem: spec, graph, initial primal state and metadata."""

    name: str
    problem: object
    graph: object
    x0: np.ndarray
    meta: dict = field(default_factory=dict)
