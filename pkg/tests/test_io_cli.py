import json
import os

import numpy as np
import pytest

from adpdd import cli
from adpdd.config import ConfigError, build_experiment, load_config, parse_config
from adpdd.dynamics import SimConfig, simulate
from adpdd.graph import path_graph
from adpdd.io import load_yaml, read_csv_table, read_json, to_jsonable, trajectory_columns, write_trajectory_csv

from conftest import CONFIGS, two_agent_problem

TWO_AGENT = """\
seed: 0
outputs: {out}
problem:
  inline:
    objectives:
      - {{P: [[2.0]], r: [-2.0], s: 1.0}}
      - {{P: [[2.0]], r: [-6.0], s: 9.0}}
graph: {{edges: [[0, 1]], gains: {gains}}}
sim: {{dt: {dt}, t_end: {t_end}, record_every: 10, tol: 1.0e-6}}
"""


def _cfg(tmp_path, name="c.yaml", gains=0.1, dt="1.0e-3", t_end=10, out=None):
    path = tmp_path / name
    path.write_text(TWO_AGENT.format(out=out or tmp_path / "out", gains=gains, dt=dt, t_end=t_end))
    return str(path)


def test_columns_order():
    assert trajectory_columns(2, 1, 1, 1) == ["t", "x_1", "x_2", "alpha_1", "alpha_2", "theta_1", "w_edge1",
                                              "lambda2", "kkt_residual", "V_total"]


def test_csv_round_trip_is_exact(tmp_path):
    p, g = two_agent_problem(), path_graph(2, gains=0.1)
    tr = simulate(p, g, np.array([0.1, 0.7]), SimConfig(dt=1e-3, t_end=0.5, record_every=7, tol=0))
    path = tmp_path / "t.csv"
    write_trajectory_csv(tr, path)
    header, data = read_csv_table(path)
    assert header == trajectory_columns(2, 1, 0, 1)
    assert np.array_equal(data[:, 0], tr.t)
    assert np.array_equal(data[:, 1:3], tr.x.reshape(len(tr), -1))
    assert np.array_equal(data[:, -1], tr.v_total)


def test_jsonable():
    out = to_jsonable({"a": np.float64(np.inf), "b": [np.int32(2), np.bool_(True)], "c": np.zeros(2)})
    assert out == {"a": "inf", "b": [2, True], "c": [0.0, 0.0]}
    json.dumps(out)


def test_yaml_scientific_floats_and_lines(tmp_path):
    path = tmp_path / "y.yaml"
    path.write_text("a: 1e-4\nb:\n  c: 2.5E3\n  d: [1, 2]\n")
    data, lines = load_yaml(path)
    assert data == {"a": 1e-4, "b": {"c": 2500.0, "d": [1, 2]}}
    assert lines["a"] == 1 and lines["b.c"] == 3 and lines["b.d[1]"] == 4


def test_config_errors_carry_lines(tmp_path):
    path = _cfg(tmp_path, dt="-1.0")
    with pytest.raises(ConfigError) as info:
        load_config(path)
    assert info.value.field == "sim.dt" and info.value.line == 9
    path = tmp_path / "bad.yaml"
    path.write_text("seed: 0\nproblem: {builtin: example1}\nbogus: 1\n")
    with pytest.raises(ConfigError) as info:
        load_config(str(path))
    assert info.value.line == 3
    with pytest.raises(ConfigError):
        parse_config({"problem": {"builtin": "nope"}})
    with pytest.raises(ConfigError):
        parse_config({"problem": {"builtin": "example1"}, "seed": "x"})


def test_exit_config_error(tmp_path, capsys):
    assert cli.main(["run", "--config", _cfg(tmp_path, dt="0")]) == cli.EXIT_CONFIG
    assert "sim.dt" in capsys.readouterr().err


def test_exit_converged_writes_outputs(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["run", "--config", _cfg(tmp_path), "--out", str(out)]) == cli.EXIT_CONVERGED
    rep = read_json(out / "report.json")
    assert rep["status"] == "converged" and rep["final_kkt"]["max"] < 1e-5
    assert set(os.listdir(out)) == {"trajectory.csv", "report.json", "meta.json"}
    meta = read_json(out / "meta.json")
    assert meta["config"]["seed"] == 0 and "numpy" in meta["versions"]


def test_exit_horizon(tmp_path):
    assert cli.main(["run", "--config", _cfg(tmp_path, t_end=0.5)]) == cli.EXIT_HORIZON


def test_exit_diverged(tmp_path):
    path = _cfg(tmp_path, dt="0.9", t_end=500, gains=1.0)
    out = tmp_path / "d"
    assert cli.main(["run", "--config", path, "--out", str(out)]) == cli.EXIT_DIVERGED
    assert read_json(out / "report.json")["status"] == "diverged"


def test_runs_are_byte_identical_and_rerunnable(tmp_path):
    path = _cfg(tmp_path)
    a, b, c = (tmp_path / k for k in "abc")
    cli.main(["run", "--config", path, "--out", str(a)])
    cli.main(["run", "--config", path, "--out", str(b)])
    cli.main(["run", "--config", str(a / "meta.json"), "--out", str(c)])
    ref = (a / "trajectory.csv").read_bytes()
    assert (b / "trajectory.csv").read_bytes() == ref
    assert (c / "trajectory.csv").read_bytes() == ref


def test_seed_override_changes_random_start(tmp_path):
    path = tmp_path / "e.yaml"
    path.write_text("problem: {builtin: example1}\nsim: {dt: 1.0e-3, t_end: 0.01}\n")
    e0 = build_experiment(load_config(str(path)))
    cfg = load_config(str(path))
    cfg.seed = 5
    assert not np.array_equal(e0.x0, build_experiment(cfg).x0)


def test_compare_zero_gain_is_identical(tmp_path):
    out = tmp_path / "cmp"
    code = cli.main(["compare", "--config", _cfg(tmp_path, gains=0.0), "--out", str(out)])
    assert code == cli.EXIT_CONVERGED
    res = read_json(out / "comparison.json")
    assert res["identical"]
    assert (out / "trajectory_adaptive.csv").read_bytes() == (out / "trajectory_baseline.csv").read_bytes()


def test_svm_run(tmp_path):
    out = tmp_path / "svm"
    code = cli.main(["run", "--config", os.path.join(CONFIGS, "svm_toy.yaml"), "--out", str(out)])
    assert code in (cli.EXIT_CONVERGED, cli.EXIT_HORIZON)
    rep = read_json(out / "report.json")
    assert rep["accuracy"] == 1.0
    header, _ = read_csv_table(out / "trajectory.csv")
    assert header[:4] == ["t", "w_1_1", "w_1_2", "w_2_1"]


def test_shipped_configs_parse():
    for name in sorted(os.listdir(CONFIGS)):
        cfg = load_config(os.path.join(CONFIGS, name))
        if cfg.kind != "svm":
            build_experiment(cfg)
