import csv
import math
import subprocess
import sys

import numpy as np
import pytest
import yaml

from ipr_qsim.errors import ConfigError
from ipr_qsim.harness import cli
from ipr_qsim.harness.config import build_config, default_aklt_h_grid, load_config
from ipr_qsim.harness.experiments import (
    ResultRow,
    count_violations,
    run_aklt_sweep,
    run_bound_study,
    run_m_convergence,
    run_oat_sweep,
    run_pxp_sweep,
    worker_count,
)
from ipr_qsim.harness.io import emit_csv, run_id, write_manifest


def write_yaml(path, data):
    path.write_text(yaml.safe_dump(data))
    return path


# ---------------------------------------------------------------- configuration

def test_defaults_per_experiment():
    oat = build_config({"experiment": "oat_sweep"})
    assert oat.L == 4 and len(oat.t_grid) == 51 and oat.t_grid[-1] == pytest.approx(math.pi / 2)
    pxp = build_config({"experiment": "pxp_sweep"})
    assert pxp.L == 8 and pxp.t == 1.0 and pxp.n_T == 10 and pxp.m_list == [3, 4, 5]
    assert len(pxp.h_grid) == 21 and pxp.h_grid[-1] == pytest.approx(1.0)
    aklt = build_config({"experiment": "aklt_sweep"})
    assert aklt.L == 4 and aklt.h_grid[0] == 0 and aklt.h_grid[-1] == pytest.approx(50.0)
    assert len(default_aklt_h_grid()) == 25


def test_overrides_beat_file(tmp_path):
    path = write_yaml(tmp_path / "c.yaml", {"experiment": "oat_sweep", "seed": 3, "mode": "exact"})
    cfg = load_config(path, {"seed": 11, "mode": "sampled", "n_shots": 100, "experiment": None})
    assert cfg.seed == 11 and cfg.mode == "sampled" and cfg.n_shots == 100


def test_grid_mappings():
    cfg = build_config({"experiment": "pxp_sweep",
                        "h_grid": {"start": 0, "stop": 0.2, "step": 0.05},
                        "t_grid": {"start": 0.1, "stop": 10, "num": 3, "spacing": "log"}})
    assert cfg.h_grid == pytest.approx([0, 0.05, 0.1, 0.15, 0.2])
    assert cfg.t_grid == pytest.approx([0.1, 1.0, 10.0])


@pytest.mark.parametrize("raw", [
    {"experiment": "nope"},
    {"experiment": "oat_sweep", "t_grid": []},
    {"experiment": "oat_sweep", "t_grid": [0.0, float("nan")]},
    {"experiment": "oat_sweep", "mode": "sampled"},
    {"experiment": "oat_sweep", "mode": "sampled", "n_shots": 10, "seed": None},
    {"experiment": "oat_sweep", "mode": "fuzzy"},
    {"experiment": "pxp_sweep", "m_list": [0, 3]},
    {"experiment": "pxp_sweep", "m_list": []},
    {"experiment": "pxp_sweep", "t": -1.0},
    {"experiment": "pxp_sweep", "n_T": 0},
    {"experiment": "oat_sweep", "q": 1},
    {"experiment": "oat_sweep", "colour": "blue"},
    {"experiment": "oat_sweep", "t_grid": {"stop": 1}},
])
def test_invalid_configs(raw):
    with pytest.raises(ConfigError):
        build_config(raw)


def test_unreadable_config(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")
    (tmp_path / "list.yaml").write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "list.yaml")


def test_worker_cap(monkeypatch):
    monkeypatch.setenv("IPR_QSIM_THREADS", "1")
    assert worker_count() == 1


# ---------------------------------------------------------------- experiments

def test_oat_sweep_endpoints():
    cfg = build_config({"experiment": "oat_sweep", "t_grid": [0.0, math.pi / 8, math.pi / 4]})
    rows = run_oat_sweep(cfg)
    assert [r.variable for r in rows] == cfg.t_grid
    assert rows[0].estimator == pytest.approx(1.0, abs=1e-12) and rows[0].oracle == pytest.approx(1.0)
    assert rows[2].estimator == pytest.approx(0.5, abs=1e-8) and rows[2].oracle == pytest.approx(0.5, abs=1e-8)
    assert max(abs(r.estimator - r.oracle) for r in rows) <= 1e-8


def test_oat_sweep_sampled_mode():
    cfg = build_config({"experiment": "oat_sweep", "t_grid": [0.0, math.pi / 4],
                        "mode": "sampled", "n_shots": 20000, "seed": 4})
    rows = run_oat_sweep(cfg)
    assert rows[0].estimator == 1.0
    assert abs(rows[1].estimator - 0.5) <= 5 * rows[1].std_error


def test_pxp_sweep_bound_column():
    cfg = build_config({"experiment": "pxp_sweep", "L": 4, "h_grid": [0.0, 0.5]})
    rows = run_pxp_sweep(cfg)
    assert len(rows) == 6
    for h in (0.0, 0.5):
        b = [r.error_bound for r in rows if r.variable == h]
        assert b[1] == pytest.approx(b[0] / 4) and b[2] == pytest.approx(b[1] / 4)
    for r in rows:
        assert 0 <= r.oracle <= 1 and -1e-12 <= r.estimator <= 1 + 1e-12
        assert {"m", "gap", "trotter_allowance", "delta_sigma_z"} <= set(r.extra)


def test_aklt_sweep_shape():
    cfg = build_config({"experiment": "aklt_sweep", "h_grid": [0.0, 0.1, 50.0]})
    rows = run_aklt_sweep(cfg)
    assert rows[0].extra["tie_broken"] == 1
    assert rows[1].oracle < 1
    assert rows[2].oracle >= 0.99
    assert max(abs(r.estimator - r.oracle) for r in rows) <= 1e-8


def test_m_convergence_envelope():
    rows = run_m_convergence(build_config({"experiment": "m_convergence", "m_list": [2, 3, 4, 5, 6]}))
    assert all(r.extra["bound_valid"] for r in rows)
    for r in rows:
        assert -1e-12 <= r.extra["residual"] <= r.error_bound
    assert all(b.error_bound == pytest.approx(a.error_bound / 4) for a, b in zip(rows, rows[1:]))


def test_bound_study_small():
    cfg = build_config({"experiment": "bound_study", "n_trials": 20, "m_list": [2, 4, 6]})
    rows = run_bound_study(cfg)
    assert count_violations(rows) == 0
    trotter = [r for r in rows if r.extra["check"] == "trotter"]
    by_case = {}
    for r in trotter:
        by_case.setdefault(r.extra["case"], []).append(r.estimator)
    for errs in by_case.values():
        assert all(b <= a * 1.05 for a, b in zip(errs, errs[1:]))


def test_violation_counter():
    rows = [ResultRow("x", "m", 1, 0, 0, extra={"violation": 1}), ResultRow("x", "m", 2, 0, 0)]
    assert count_violations(rows) == 1


# ---------------------------------------------------------------- output

def test_empty_csv_is_header_only(tmp_path):
    path = emit_csv([], tmp_path / "e.csv")
    assert path.read_text() == "experiment,variable_name,variable,estimator,oracle,error_bound,std_error\n"


def test_oat_csv_columns(tmp_path):
    rows = run_oat_sweep(build_config({"experiment": "oat_sweep", "t_grid": [0.0, 0.1]}))
    with emit_csv(rows, tmp_path / "o.csv").open() as fh:
        header = next(csv.reader(fh))
    assert {"variable", "estimator", "oracle"} <= set(header)
    assert "wall_ms" not in header


def test_run_id_is_stable_and_content_based():
    a = build_config({"experiment": "oat_sweep", "seed": 1})
    b = build_config({"experiment": "oat_sweep", "seed": 1, "output": "elsewhere"})
    c = build_config({"experiment": "oat_sweep", "seed": 2})
    assert run_id(a) == run_id(b) != run_id(c)
    assert len(run_id(a)) == 12


def test_manifest_is_yaml(tmp_path):
    cfg = build_config({"experiment": "oat_sweep"})
    doc = yaml.safe_load(write_manifest(cfg, run_id(cfg), tmp_path / "m.yaml", {"rows": 3}).read_text())
    assert doc["run_id"] == run_id(cfg) and doc["config"]["L"] == 4 and doc["summary"]["rows"] == 3


def test_csv_write_error_mentions_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(OSError, match="file"):
        emit_csv([], blocker / "sub" / "x.csv")


# ---------------------------------------------------------------- CLI

def test_cli_run_is_byte_identical(tmp_path):
    cfg = write_yaml(tmp_path / "c.yaml", {"experiment": "oat_sweep", "t_grid": [0.0, 0.3, 0.7],
                                           "mode": "sampled", "n_shots": 500})
    outputs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        assert cli.main(["run", str(cfg), "--out", str(out), "--seed", "5"]) == 0
        outputs.append((out / "oat_sweep.csv").read_bytes())
        assert (out / "oat_sweep.manifest.yaml").exists()
        assert (out / "oat_sweep.timings.csv").exists()
    assert outputs[0] == outputs[1]
    assert cli.main(["run", str(cfg), "--out", str(tmp_path / "other"), "--seed", "6"]) == 0
    assert (tmp_path / "other" / "oat_sweep.csv").read_bytes() != outputs[0]


def test_cli_experiment_override(tmp_path):
    cfg = write_yaml(tmp_path / "c.yaml", {"experiment": "oat_sweep", "L": 4, "h_grid": [0.0, 50.0]})
    assert cli.main(["run", str(cfg), "--experiment", "aklt_sweep", "--out", str(tmp_path)]) == 0
    with (tmp_path / "aklt_sweep.csv").open() as fh:
        assert len(list(csv.DictReader(fh))) == 2


def test_cli_bad_config_exit_code(tmp_path, capsys):
    cfg = write_yaml(tmp_path / "c.yaml", {"experiment": "oat_sweep", "t_grid": []})
    assert cli.main(["run", str(cfg)]) == 2
    assert "t_grid" in capsys.readouterr().err


def test_cli_verify_passes(capsys):
    assert cli.main(["verify", "--trials", "10"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines and all(line.startswith("PASS") for line in lines)


def test_console_entry_point(tmp_path):
    cfg = write_yaml(tmp_path / "c.yaml", {"experiment": "oat_sweep", "t_grid": [0.0]})
    res = subprocess.run([sys.executable, "-m", "ipr_qsim", "run", str(cfg), "--out", str(tmp_path)],
                         capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert (tmp_path / "oat_sweep.csv").exists()
