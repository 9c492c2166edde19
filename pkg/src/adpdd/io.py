"""Trajectory CSV, JSON reports and YAML configs.

Floats are written with 17 significant digits so a CSV round-trips to
the exact doubles, and identical runs give identical bytes.
"""

import csv
import json
import math
import re

import numpy as np
import yaml

FLOAT_FMT = "%.17g"


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads ``1e-4`` style floats as numbers."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
    |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
    |\.[0-9_]+(?:[eE][-+][0-9]+)?
    |[-+]?\.(?:inf|Inf|INF)
    |\.(?:nan|NaN|NAN))$""", re.X),
    list("-+0123456789."),
)


def _fmt(v):
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return FLOAT_FMT % v


def trajectory_columns(n, l, m, n_edges):
    """Header in the fixed order ``t, x, alpha, theta, weights, lambda2, kkt_residual, V_total``."""
    nl = n * l
    return (["t"] + [f"x_{k}" for k in range(1, nl + 1)] + [f"alpha_{k}" for k in range(1, nl + 1)]
            + [f"theta_{k}" for k in range(1, m + 1)] + [f"w_edge{k}" for k in range(1, n_edges + 1)]
            + ["lambda2", "kkt_residual", "V_total"])


def trajectory_table(traj):
    """Records as a 2-D float array in :func:`trajectory_columns` order."""
    r = len(traj)
    return np.hstack([
        traj.t[:, None], traj.x.reshape(r, -1), traj.alpha.reshape(r, -1), traj.theta.reshape(r, -1),
        traj.weights.reshape(r, -1), traj.lambda2[:, None], traj.kkt_max[:, None], traj.v_total[:, None],
    ])


def write_table_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_trajectory_csv(traj, path):
    n, l = traj.x.shape[1:]
    header = trajectory_columns(n, l, traj.theta.shape[1], traj.weights.shape[1])
    write_table_csv(path, header, trajectory_table(traj))


def read_csv_table(path):
    """``(header, data)`` from a numeric CSV written by this module."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    data = np.array([[float(v) for v in row] for row in body]) if body else np.zeros((0, len(header)))
    return header, data


def to_jsonable(obj):
    """Recursively convert numpy values; non-finite floats become strings."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")
    return obj


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(to_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def load_yaml(path):
    """Parse a YAML file, returning the data and a ``{dotted.path: line}`` map (1-based)."""
    with open(path) as fh:
        text = fh.read()
    data = yaml.load(text, Loader=_Loader)
    lines = {}

    def walk(node, prefix):
        if isinstance(node, yaml.MappingNode):
            for key, value in node.value:
                name = f"{prefix}.{key.value}" if prefix else str(key.value)
                lines[name] = key.start_mark.line + 1
                walk(value, name)
        elif isinstance(node, yaml.SequenceNode):
            for k, value in enumerate(node.value):
                name = f"{prefix}[{k}]"
                lines[name] = value.start_mark.line + 1
                walk(value, name)

    root = yaml.compose(text, Loader=_Loader)
    if root is not None:
        walk(root, "")
    return data, lines


def dump_yaml(obj):
    return yaml.safe_dump(to_jsonable(obj), sort_keys=False)


__all__ = [
    "FLOAT_FMT",
    "dump_yaml",
    "load_yaml",
    "read_csv_table",
    "read_json",
    "to_jsonable",
    "trajectory_columns",
    "trajectory_table",
    "write_json",
    "write_table_csv",
    "write_trajectory_csv",
]
