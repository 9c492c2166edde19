"""Experiment configuration: parsing, validation and builder resolution.

A config is a YAML mapping::

    seed: 0
    outputs: runs/example1
    problem:
      builtin: example1          # example1 | example2 | lsq | qlsq | svm
      options: {topology: path}
    graph: {gains: 0.1}
    sim: {dt: 1.0e-4, t_end: 30}
    a_star: 2.0
    disturbance: {target: H1, signal: sinusoid, amplitude: 0.1, frequency: 5, window: [1, 2]}
    compare: {tol: 1.0e-4, sweep: [0, 0.001, 0.01, 0.1]}

An inline problem replaces ``builtin`` with ``inline`` holding
``objectives`` (``P``, ``r``, ``s``) and ``constraints`` (``agent``, ``P``,
``r``, ``s``, optional ``component``); its graph must list ``edges``.
"""

import math
from dataclasses import dataclass, field, fields

import numpy as np

from .apps import (
    box_lsq_experiment,
    example1_experiment,
    example2_experiment,
    lsq_experiment,
)
from .apps.common import Experiment
from .dynamics import SimConfig
from .graph import build_graph, complete_graph, path_graph, random_connected_graph, ring_graph
from .io import load_yaml
from .problem import Constraint, QuadraticFunction, build_problem
from .robustness import DisturbanceSpec
from .seeding import substream

BUILTINS = ("example1", "example2", "lsq", "qlsq", "svm")

# builtin-specific simulation defaults; anything in the config wins
SIM_DEFAULTS = {
    "example1": {"t_end": 30.0},
    "example2": {},
    "lsq": {"dt": 1e-3, "t_end": 60.0, "record_every": 10},
    "qlsq": {"dt": 1e-3, "t_end": 300.0, "record_every": 100},
    "svm": {"dt": 5e-3, "t_end": 20.0, "record_every": 10},
    "inline": {},
}

_TOP_KEYS = {"seed", "outputs", "problem", "graph", "sim", "a_star", "disturbance", "compare", "x0"}
_SIM_KEYS = {f.name for f in fields(SimConfig)}
_DIST_KEYS = {f.name for f in fields(DisturbanceSpec)}
_COMPARE_KEYS = {"tol", "sweep", "sweep_sim", "sweep_disturbance", "workers", "oracle"}
_GRAPH_KEYS = {"topology", "n", "edges", "edge_prob", "initial_weight", "gains"}


class ConfigError(ValueError):
    """Invalid config; ``field`` is the dotted key, ``line`` its 1-based line (if known)."""

    def __init__(self, field_name, message, line=None):
        where = f"line {line}: " if line else ""
        super().__init__(f"{where}{field_name}: {message}")
        self.field = field_name
        self.line = line


@dataclass
class ExperimentConfig:
    problem: dict
    graph: dict = field(default_factory=dict)
    sim: dict = field(default_factory=dict)
    disturbance: dict = None
    compare: dict = field(default_factory=dict)
    outputs: str = "adpdd-out"
    seed: int = 0
    a_star: object = 2.0
    x0: object = None
    lines: dict = field(default_factory=dict, repr=False)

    @property
    def kind(self):
        return self.problem.get("builtin", "inline")

    def error(self, name, message):
        return ConfigError(name, message, self.lines.get(name))

    def sim_config(self, **overrides):
        merged = {**SIM_DEFAULTS.get(self.kind, {}), **self.sim, **overrides}
        try:
            return SimConfig(**merged)
        except (TypeError, ValueError) as exc:
            key = str(exc).split(" ", 1)[0]
            raise self.error(f"sim.{key}" if key in _SIM_KEYS else "sim", str(exc)) from exc

    def disturbance_spec(self, overrides=None):
        if self.disturbance is None and not overrides:
            return None
        spec = {"seed": self.seed, **(self.disturbance or {}), **(overrides or {})}
        if "window" in spec:
            spec["window"] = tuple(math.inf if v in ("inf", None) else float(v) for v in spec["window"])
        try:
            return DisturbanceSpec(**spec)
        except (TypeError, ValueError) as exc:
            raise self.error("disturbance", str(exc)) from exc

    def resolved(self):
        """Plain dict that reloads to an equivalent config (defaults made explicit)."""
        sim = {f.name: getattr(self.sim_config(), f.name) for f in fields(SimConfig)}
        out = {
            "seed": self.seed,
            "outputs": self.outputs,
            "problem": self.problem,
            "graph": self.graph,
            "sim": sim,
            "a_star": self.a_star,
        }
        if self.x0 is not None:
            out["x0"] = self.x0
        if self.disturbance is not None:
            d = self.disturbance_spec().to_dict()
            d.pop("direction", None) if d.get("direction") is None else None
            d.pop("hold", None) if d.get("hold") is None else None
            out["disturbance"] = d
        if self.compare:
            out["compare"] = self.compare
        return out


def _need_mapping(value, name, lines):
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigError(name, "expected a mapping", lines.get(name))
    return value


def _check_keys(section, allowed, name, lines):
    for key in section:
        if key not in allowed:
            full = f"{name}.{key}" if name else key
            raise ConfigError(full, f"unknown key (allowed: {', '.join(sorted(allowed))})", lines.get(full))


def parse_config(data, lines=None):
    """Validate a loaded mapping into an :class:`ExperimentConfig`."""
    lines = lines or {}
    if not isinstance(data, dict):
        raise ConfigError("<root>", "config must be a mapping")
    _check_keys(data, _TOP_KEYS, "", lines)
    if "problem" not in data:
        raise ConfigError("problem", "missing required section")
    problem = _need_mapping(data["problem"], "problem", lines)
    _check_keys(problem, {"builtin", "options", "inline"}, "problem", lines)
    if ("builtin" in problem) == ("inline" in problem):
        raise ConfigError("problem", "give exactly one of 'builtin' or 'inline'", lines.get("problem"))
    if "builtin" in problem and problem["builtin"] not in BUILTINS:
        raise ConfigError("problem.builtin", f"unknown builtin {problem['builtin']!r} (choose from "
                          f"{', '.join(BUILTINS)})", lines.get("problem.builtin"))
    _need_mapping(problem.get("options"), "problem.options", lines)
    graph = _need_mapping(data.get("graph"), "graph", lines)
    _check_keys(graph, _GRAPH_KEYS, "graph", lines)
    sim = _need_mapping(data.get("sim"), "sim", lines)
    _check_keys(sim, _SIM_KEYS, "sim", lines)
    for key, value in sim.items():
        if key == "adaptive":
            if not isinstance(value, bool):
                raise ConfigError(f"sim.{key}", "expected true or false", lines.get(f"sim.{key}"))
        elif isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"sim.{key}", f"expected a number, got {value!r}", lines.get(f"sim.{key}"))
    dist = data.get("disturbance")
    if dist is not None:
        dist = _need_mapping(dist, "disturbance", lines)
        _check_keys(dist, _DIST_KEYS, "disturbance", lines)
    compare = _need_mapping(data.get("compare"), "compare", lines)
    _check_keys(compare, _COMPARE_KEYS, "compare", lines)
    seed = data.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed", "expected a nonnegative integer", lines.get("seed"))
    a_star = data.get("a_star", 2.0)
    if a_star != "auto" and (isinstance(a_star, bool) or not isinstance(a_star, (int, float))):
        raise ConfigError("a_star", "expected a number or 'auto'", lines.get("a_star"))
    cfg = ExperimentConfig(problem=problem, graph=graph, sim=sim, disturbance=dist, compare=compare,
                           outputs=str(data.get("outputs", "adpdd-out")), seed=seed,
                           a_star=a_star if a_star == "auto" else float(a_star), x0=data.get("x0"),
                           lines=lines)
    cfg.sim_config()
    cfg.disturbance_spec()
    return cfg


def load_config(path):
    """Read and validate a YAML config file.

    Raises
    ------
    ConfigError
        With the offending field and line on any parse or validation error.
    """
    import yaml

    try:
        data, lines = load_yaml(path)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        raise ConfigError("<yaml>", str(exc.problem), mark.line + 1 if mark else None) from exc
    except OSError as exc:
        raise ConfigError("<file>", str(exc)) from exc
    return parse_config(data, lines)


# ----------------------------------------------------------------------------
# builder resolution
# ----------------------------------------------------------------------------


def _graph_from_section(section, n, seed, default="path"):
    topology = section.get("topology", "edges" if "edges" in section else default)
    w0 = float(section.get("initial_weight", 1.0))
    gains = section.get("gains", 1.0)
    kw = {"initial_weight": w0}
    if topology == "edges":
        if "edges" not in section:
            raise ConfigError("graph.edges", "required for topology 'edges'")
        g = build_graph(n, section["edges"], **kw)
    elif topology == "path":
        g = path_graph(n, **kw)
    elif topology == "ring":
        g = ring_graph(n, **kw)
    elif topology == "complete":
        g = complete_graph(n, **kw)
    elif topology == "random":
        g = random_connected_graph(n, substream(seed, "graph"), edge_prob=float(section.get("edge_prob", 0.3)), **kw)
    else:
        raise ConfigError("graph.topology", f"unknown topology {topology!r}")
    # zero gains (frozen weights) are only accepted through with_gains
    return g.with_gains(gains)


def _inline_problem(cfg):
    spec = cfg.problem["inline"]
    if not isinstance(spec, dict) or "objectives" not in spec:
        raise cfg.error("problem.inline", "needs an 'objectives' list")
    try:
        objs = [QuadraticFunction(o["P"], o.get("r", np.zeros(len(o["P"]))), o.get("s", 0.0))
                for o in spec["objectives"]]
        cons = []
        for c in spec.get("constraints", None) or []:
            func = QuadraticFunction(c["P"], c.get("r", np.zeros(len(c["P"]))), c.get("s", 0.0))
            cons.append(Constraint(int(c["agent"]), func, c.get("component")))
        return build_problem(objs, cons, allow_semidefinite=bool(spec.get("allow_semidefinite", False)))
    except (KeyError, TypeError, ValueError) as exc:
        raise cfg.error("problem.inline", f"{type(exc).__name__}: {exc}") from exc


def build_experiment(cfg):
    """Instantiate problem, graph and start point for a non-SVM config."""
    kind = cfg.kind
    opts = dict(cfg.problem.get("options") or {})
    try:
        if kind == "example1":
            exp = example1_experiment(cfg.seed, **opts)
        elif kind == "example2":
            exp = example2_experiment(cfg.seed, **opts)
        elif kind == "lsq":
            exp = lsq_experiment(cfg.seed, **opts)
        elif kind == "qlsq":
            if "bounds" in opts:
                opts["bounds"] = tuple(opts["bounds"])
            exp = box_lsq_experiment(cfg.seed, **opts)
        elif kind == "inline":
            p = _inline_problem(cfg)
            g = _graph_from_section(cfg.graph, p.n, cfg.seed)
            x0 = substream(cfg.seed, "x0").standard_normal((p.n, p.l))
            exp = Experiment("inline", p, g, x0, {"seed": cfg.seed})
        else:
            raise cfg.error("problem.builtin", f"{kind!r} is not a primal-dual problem")
    except TypeError as exc:
        raise cfg.error("problem.options", str(exc)) from exc
    except ConfigError:
        raise
    except ValueError as exc:
        raise cfg.error("problem", str(exc)) from exc
    g = exp.graph
    if kind != "inline" and cfg.graph:
        try:
            g = _builtin_graph_override(cfg, g)
        except ValueError as exc:
            raise cfg.error("graph", str(exc)) from exc
    x0 = exp.x0
    if cfg.x0 is not None:
        try:
            x0 = np.asarray(cfg.x0, dtype=float).reshape(exp.problem.n, exp.problem.l)
        except ValueError as exc:
            raise cfg.error("x0", f"expected {exp.problem.n * exp.problem.l} values") from exc
    return Experiment(exp.name, exp.problem, g, x0, exp.meta)


def _builtin_graph_override(cfg, g):
    sec = cfg.graph
    if "topology" in sec or "edges" in sec:
        return _graph_from_section(sec, g.n, cfg.seed)
    if "initial_weight" in sec:
        g = build_graph(g.n, g.edges, float(sec["initial_weight"])).with_gains(sec.get("gains", g.gains))
    elif "gains" in sec:
        g = g.with_gains(sec["gains"])
    return g


__all__ = [
    "BUILTINS",
    "ConfigError",
    "ExperimentConfig",
    "SIM_DEFAULTS",
    "build_experiment",
    "load_config",
    "parse_config",
]
