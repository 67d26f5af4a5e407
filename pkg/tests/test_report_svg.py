import json
import os

import numpy as np
import pytest

from nuisancegrad.errors import EmptySeries
from nuisancegrad.experiments import run_experiment
from nuisancegrad.optimize import Trajectory
from nuisancegrad.report import (aggregate_rel_err, read_trajectories,
                                 write_summary, write_trajectories)
from nuisancegrad.svgplot import Series, render_plot

GOLDEN = os.path.join(os.path.dirname(__file__), "data", "summary_golden.json")

SMOKE_CONFIG = {
    "experiment": "single",
    "problem": "plm_nonorth",
    "nuisance": {"mode": "true"},
    "optimizer": "sgd",
    "opt": {"eta": 1e-3, "n_iters": 1_000, "record_every": 250},
    "replications": 2,
    "seed": 77,
}


def _fake_traj(seed, n=5, d=2):
    rng = np.random.default_rng(seed)
    iters = np.arange(n) * 100
    thetas = rng.normal(size=(n, d))
    rel = np.abs(rng.normal(size=n)) + 0.01
    return Trajectory(iters=iters, thetas=thetas, theta_final=thetas[-1],
                      rel_err=rel)


def test_write_and_read_trajectories_roundtrip(tmp_path):
    trajs = [_fake_traj(1), _fake_traj(2)]
    paths = write_trajectories(str(tmp_path), trajs, seeds=[11, 12])
    merged = paths[0]
    runs = read_trajectories(merged)
    assert set(runs) == {0, 1}
    assert np.array_equal(runs[0]["iter"], trajs[0].iters)
    assert np.array_equal(runs[1]["theta"], trajs[1].thetas)
    assert runs[1]["seed"] == 12


def test_per_replication_files_exist(tmp_path):
    trajs = [_fake_traj(3), _fake_traj(4)]
    write_trajectories(str(tmp_path), trajs, seeds=[1, 2])
    rep_dir = tmp_path / "trajectories"
    assert sorted(p.name for p in rep_dir.iterdir()) == ["rep-000.csv", "rep-001.csv"]


def test_aggregate_uses_completed_runs_only():
    trajs = [_fake_traj(5), _fake_traj(6)]
    trajs.append(Trajectory(iters=np.arange(3), thetas=np.zeros((3, 2)),
                            theta_final=np.zeros(2), rel_err=None))
    agg = aggregate_rel_err(trajs)
    assert agg["count"] == 2
    med = np.median(np.vstack([trajs[0].rel_err, trajs[1].rel_err]), axis=0)
    assert np.allclose(agg["median"], med)


def test_summary_golden_file(tmp_path):
    report = run_experiment(dict(SMOKE_CONFIG))
    path = write_summary(str(tmp_path), report)
    with open(path) as fh:
        produced = fh.read()
    if not os.path.exists(GOLDEN):  # pragma: no cover - regeneration path
        os.makedirs(os.path.dirname(GOLDEN), exist_ok=True)
        with open(GOLDEN, "w") as fh:
            fh.write(produced)
    with open(GOLDEN) as fh:
        golden = fh.read()
    assert produced == golden
    assert json.loads(produced)["schema_version"] == 1


def test_summary_schema_fields():
    report = run_experiment(dict(SMOKE_CONFIG))
    doc = report.summary_dict()
    for key in ("schema_version", "experiment", "config", "master_seed",
                "seeds", "replications", "final_rel_err"):
        assert key in doc
    assert doc["replications"] == {"requested": 2, "completed": 2}


# ---------------------------------------------------------------------------
# SVG rendering


def test_render_single_series(tmp_path):
    path = str(tmp_path / "one.svg")
    render_plot([Series(label="a", xs=[0, 1, 2], ys=[1.0, 0.5, 0.25])], path)
    with open(path) as fh:
        body = fh.read()
    assert body.startswith("<svg")
    assert body.count("<polyline") == 1
    assert "</svg>" in body


def test_render_is_byte_stable(tmp_path):
    series = [Series(label="run", xs=list(range(10)),
                     ys=[1.0 / (k + 1) for k in range(10)])]
    p1, p2 = str(tmp_path / "a.svg"), str(tmp_path / "b.svg")
    render_plot(series, p1, logy=True)
    render_plot(series, p2, logy=True)
    assert open(p1, "rb").read() == open(p2, "rb").read()


def test_render_median_with_band(tmp_path):
    rng = np.random.default_rng(0)
    curves = np.abs(rng.normal(size=(20, 8))) + 0.05
    med = np.median(curves, axis=0)
    q25 = np.quantile(curves, 0.25, axis=0)
    q75 = np.quantile(curves, 0.75, axis=0)
    series = [Series(label="median", xs=list(range(8)), ys=med.tolist(),
                     band=(q25.tolist(), q75.tolist()))]
    path = str(tmp_path / "band.svg")
    render_plot(series, path)
    body = open(path).read()
    assert "<polygon" in body and "<polyline" in body


def test_render_rejects_empty(tmp_path):
    with pytest.raises(EmptySeries):
        render_plot([], str(tmp_path / "x.svg"))
    with pytest.raises(EmptySeries):
        render_plot([Series(label="e", xs=[], ys=[])], str(tmp_path / "y.svg"))
