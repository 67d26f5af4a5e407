import json
import os

import numpy as np
import pytest

from nuisancegrad.cli import main
from nuisancegrad.errors import ConfigError
from nuisancegrad.experiments import resolve_jobs, validate_config
from nuisancegrad.rng import Rng
from nuisancegrad.simdata import TabularSource, ingest_csv

MINIMAL = {
    "experiment": "single",
    "problem": "plm_nonorth",
    "nuisance": {"mode": "true"},
    "optimizer": "sgd",
    "opt": {"eta": 1e-3, "n_iters": 1_000, "record_every": 250},
    "replications": 2,
    "seed": 3,
}


def _write_cfg(tmp_path, cfg, name="cfg.json"):
    path = os.path.join(tmp_path, name)
    with open(path, "w") as fh:
        json.dump(cfg, fh)
    return path


def test_run_smoke_writes_artifacts(tmp_path):
    cfg_path = _write_cfg(str(tmp_path), MINIMAL)
    out = str(tmp_path / "out")
    assert main(["run", "--config", cfg_path, "--out", out]) == 0
    assert os.path.exists(os.path.join(out, "trajectories.csv"))
    assert os.path.exists(os.path.join(out, "summary.json"))
    reps = sorted(os.listdir(os.path.join(out, "trajectories")))
    assert reps == ["rep-000.csv", "rep-001.csv"]


def test_run_rejects_unknown_problem(tmp_path, capsys):
    bad = dict(MINIMAL)
    bad["problem"] = "nonexistent"
    cfg_path = _write_cfg(str(tmp_path), bad)
    code = main(["run", "--config", cfg_path, "--out", str(tmp_path / "o")])
    assert code == 2
    assert "problem" in capsys.readouterr().err


def test_run_rejects_missing_config_file(tmp_path, capsys):
    code = main(["run", "--config", str(tmp_path / "missing.json")])
    assert code == 2


def test_validate_config_names_field_paths():
    with pytest.raises(ConfigError) as err:
        validate_config({"experiment": "single", "replications": 0})
    assert err.value.field == "replications"
    with pytest.raises(ConfigError) as err:
        validate_config({"experiment": "single",
                         "nuisance": {"mode": "perturbed"}})
    assert err.value.field == "nuisance.r"


def test_gen_data_table_roundtrips(tmp_path):
    out = str(tmp_path)
    assert main(["gen-data", "--kind", "table", "--rows", "200",
                 "--seed", "5", "--out", out]) == 0
    batch = ingest_csv(TabularSource(path=os.path.join(out, "table.csv")),
                       Rng(0))
    assert len(batch) == 200


def test_gen_data_sim(tmp_path):
    out = str(tmp_path)
    assert main(["gen-data", "--kind", "sim", "--rows", "50",
                 "--seed", "2", "--out", out]) == 0
    with open(os.path.join(out, "samples.csv")) as fh:
        header = fh.readline().strip().split(",")
        rows = fh.readlines()
    assert header == ["x_0", "x_1", "w_0", "w_1", "y", "u"]
    assert len(rows) == 50


def test_fit_nuisance_and_operator(tmp_path):
    cfg_path = _write_cfg(str(tmp_path), MINIMAL)
    out = str(tmp_path / "models")
    assert main(["fit-nuisance", "--config", cfg_path, "--m", "400",
                 "--out", out]) == 0
    assert os.path.exists(os.path.join(out, "nuisance_g.json"))
    assert main(["fit-operator", "--config", cfg_path, "--k", "400",
                 "--out", out]) == 0
    assert os.path.exists(os.path.join(out, "operator.json"))


def test_report_command(tmp_path):
    cfg_path = _write_cfg(str(tmp_path), MINIMAL)
    out = str(tmp_path / "out")
    main(["run", "--config", cfg_path, "--out", out])
    assert main(["report", "--run-dir", out]) == 0
    with open(os.path.join(out, "report.json")) as fh:
        doc = json.load(fh)
    assert doc["runs"] == 2


def test_run_svg_plot(tmp_path):
    cfg_path = _write_cfg(str(tmp_path), MINIMAL)
    out = str(tmp_path / "out")
    assert main(["run", "--config", cfg_path, "--out", out,
                 "--format", "svg"]) == 0
    assert os.path.exists(os.path.join(out, "plots", "rel_err.svg"))


def test_verify_single_fast_criterion(tmp_path, capsys):
    code = main(["verify", "--criterion", "1", "--out", str(tmp_path / "v")])
    captured = capsys.readouterr().out
    assert code == 0
    assert "criterion  1" in captured and "PASS" in captured
    with open(os.path.join(str(tmp_path / "v"), "verify_report.json")) as fh:
        doc = json.load(fh)
    assert doc[0]["criterion"] == 1 and doc[0]["passed"]


def test_numeric_failure_exit_code(tmp_path, capsys):
    diverging = dict(MINIMAL)
    diverging["opt"] = {"eta": 10.0, "n_iters": 10_000, "record_every": 1_000}
    cfg_path = _write_cfg(str(tmp_path), diverging)
    code = main(["run", "--config", cfg_path, "--out", str(tmp_path / "o")])
    assert code == 3
    err = capsys.readouterr().err
    assert "NonFiniteIterate" in err and "replication 0" in err


def test_jobs_env_override(monkeypatch):
    monkeypatch.setenv("NUISANCE_GRAD_JOBS", "3")
    assert resolve_jobs(1) == 3
    monkeypatch.delenv("NUISANCE_GRAD_JOBS")
    assert resolve_jobs(2) == 2
    assert resolve_jobs(None) == 1


def test_worker_pool_matches_sequential(tmp_path):
    from nuisancegrad.experiments import run_experiment

    r1 = run_experiment(dict(MINIMAL), jobs=1)
    r2 = run_experiment(dict(MINIMAL), jobs=2)
    for a, b in zip(r1.trajectories, r2.trajectories):
        assert np.array_equal(a.thetas, b.thetas)


def test_run_artifacts_are_reproducible(tmp_path):
    cfg_path = _write_cfg(str(tmp_path), MINIMAL)
    blobs = []
    for tag in ("a", "b"):
        out = str(tmp_path / tag)
        main(["run", "--config", cfg_path, "--out", out])
        with open(os.path.join(out, "trajectories.csv"), "rb") as fh:
            blobs.append(fh.read())
        with open(os.path.join(out, "summary.json"), "rb") as fh:
            blobs.append(fh.read())
    assert blobs[0] == blobs[2]
    assert blobs[1] == blobs[3]
