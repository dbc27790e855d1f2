import json
import shutil
import subprocess
import sys

import pytest

from layermpc import Polytope
from layermpc.cli import EXIT_CONFIG, EXIT_NOT_CONVERGED, EXIT_OK, EXIT_OUTSIDE_DOMAIN, main, read_vertices
from layermpc.simulator import read_comparison_csv, read_trajectory_csv
from layermpc.systems import double_integrator_config


@pytest.fixture(scope="module")
def sets_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sets")
    assert main(["sets", "--config", "double-integrator", "--out", str(out)]) == EXIT_OK
    return out


def _with_ladder(sets_dir, tmp_path):
    """Fresh output directory that reuses the cached double-integrator ladder."""
    shutil.copy(sets_dir / "ladder.json", tmp_path / "ladder.json")
    return tmp_path


def _write_config(tmp_path, **changes):
    cfg = double_integrator_config()
    cfg.update(changes)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return str(path)


def test_sets_outputs(sets_dir):
    names = {p.name for p in sets_dir.iterdir()}
    for k in range(6):
        assert f"rung_{k}.csv" in names
    for k in range(1, 5):
        assert f"layer_{k}.csv" in names
    assert {"Xs.csv", "S_N_plus_1.csv", "contractivity_report.json", "ladder.json"} <= names
    V = read_vertices(sets_dir / "Xs.csv")
    assert Polytope.from_box([-5, -0.025], [5, 0.025]).equals(
        Polytope.from_box(V.min(axis=0), V.max(axis=0)))
    rep = json.loads((sets_dir / "contractivity_report.json").read_text())
    assert rep["passed"] and rep["verdict"] == "passed"
    header = (sets_dir / "layer_1.csv").read_text().splitlines()[0]
    assert header == "boundary,x1,x2"


def test_ladder_cache_reused(sets_dir, capsys):
    before = (sets_dir / "ladder.json").stat().st_mtime_ns
    assert main(["check", "--config", "double-integrator", "--out", str(sets_dir)]) == EXIT_OK
    assert (sets_dir / "ladder.json").stat().st_mtime_ns == before
    assert json.loads(capsys.readouterr().out)["passed"] is True


def test_not_converged_exit_code(tmp_path):
    path = _write_config(tmp_path, max_rungs=1)
    assert main(["sets", "--config", path, "--out", str(tmp_path / "o")]) == EXIT_NOT_CONVERGED


def test_simulate_scenario(sets_dir, tmp_path):
    out = _with_ladder(sets_dir, tmp_path)
    assert main(["simulate", "--config", "double-integrator", "--out", str(out)]) == EXIT_OK
    rows = read_trajectory_csv((out / "trajectory_setpoint-switch_layered.csv").read_text())
    assert len(rows) == 141
    summary = json.loads((out / "summary_setpoint-switch_layered.json").read_text())
    assert summary["feasible"] and summary["final_error"] < 1e-3


def test_outside_domain_exit_code(sets_dir, tmp_path):
    out = _with_ladder(sets_dir, tmp_path)
    sc = [{"name": "far", "x0": [0.0, 0.99], "schedule": [[0, [0.0, 0.0]]], "T_sim": 5}]
    path = _write_config(tmp_path, scenarios=sc)
    assert main(["simulate", "--config", path, "--out", str(out)]) == EXIT_OUTSIDE_DOMAIN
    assert json.loads((out / "summary_far_layered.json").read_text())["feasible"] is False


@pytest.mark.parametrize(
    "content",
    ['{"system": {}}', "not json", '{"system": {"A": [[1]], "B": [[1]], "X": {"lb": [-1], "ub": [1]}, '
     '"U": {"lb": [-1], "ub": [1]}}, "N": 2, "controllers": {"a": {"N": 2, "Q": [[1]], "R": [[1]], "T": [[1]]}}, '
     '"compare": {"controllers": ["missing"]}}'],
)
def test_bad_config_exit_code(tmp_path, content):
    path = tmp_path / "bad.json"
    path.write_text(content)
    assert main(["sets", "--config", str(path), "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_unknown_preset_and_scenario(sets_dir, tmp_path):
    assert main(["sets", "--config", "no-such-preset", "--out", str(tmp_path)]) == EXIT_CONFIG
    out = _with_ladder(sets_dir, tmp_path)
    assert main(["simulate", "--config", "double-integrator", "--out", str(out), "--scenario", "nope"]) == EXIT_CONFIG


def test_compare_deterministic(sets_dir, tmp_path):
    cmp = {"controllers": ["layered", "mpct_n3"], "points": 4, "setpoint": [0.0, 0.0], "T_sim": 15}
    path = _write_config(tmp_path, compare=cmp)
    texts = []
    for tag in ("a", "b"):
        out = tmp_path / tag
        out.mkdir()
        _with_ladder(sets_dir, out)
        assert main(["compare", "--config", path, "--out", str(out), "--seed", "42"]) == EXIT_OK
        texts.append((out / "comparison.csv").read_text())
    assert texts[0] == texts[1]
    rows = read_comparison_csv(texts[0])
    assert len(rows) == 8
    means = json.loads((tmp_path / "a" / "means.json").read_text())
    assert means["seed"] == 42 and means["T_sim"] == 15 and means["setpoint"] == [0.0, 0.0]


def test_compare_single_controller(sets_dir, tmp_path):
    cmp = {"controllers": ["layered"], "points": 2, "T_sim": 5}
    path = _write_config(tmp_path, compare=cmp)
    out = _with_ladder(sets_dir, tmp_path)
    assert main(["compare", "--config", path, "--out", str(out), "--seed", "1"]) == EXIT_OK
    rows = read_comparison_csv((out / "comparison.csv").read_text())
    assert {r["controller"] for r in rows} == {"layered"}
    assert all(r["status"] == "ok" for r in rows)


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "layermpc", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    assert "sets" in res.stdout and "compare" in res.stdout
