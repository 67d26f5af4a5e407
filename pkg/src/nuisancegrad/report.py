"""Report assembly and artifact writing.

Artifacts are deterministic functions of (config, master seed): CSV cells
use repr-exact float formatting and JSON is dumped with sorted keys, so
reruns are byte-identical.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .optimize import Trajectory

SUMMARY_SCHEMA_VERSION = 1


def _fmt(v) -> str:
    """Shortest round-trip decimal form; stable across runs."""
    return repr(float(v))


@dataclass
class Report:
    """Everything one experiment produces: per-replication trajectories,
    aggregate curves, fitted slopes, and reproducibility metadata."""

    experiment: str
    config: dict
    master_seed: int
    seeds: list
    trajectories: list          # list[Trajectory], seed order
    aggregate: Optional[dict] = None
    slopes: Optional[dict] = None
    extra: dict = field(default_factory=dict)
    traj_seeds: Optional[list] = None   # per-trajectory seeds when the
                                        # studies emit several runs per seed

    def summary_dict(self) -> dict:
        from . import __version__

        final_rel = [None if t.rel_err is None else float(t.rel_err[-1])
                     for t in self.trajectories]
        doc = {
            "schema_version": SUMMARY_SCHEMA_VERSION,
            "experiment": self.experiment,
            "config": self.config,
            "master_seed": self.master_seed,
            "seeds": list(self.seeds),
            "replications": {
                "requested": len(self.seeds),
                "completed": len(self.trajectories),
            },
            "final_rel_err": final_rel,
            "meta": {"package_version": __version__},
        }
        if self.aggregate is not None:
            doc["aggregate"] = self.aggregate
        if self.slopes is not None:
            doc["slopes"] = self.slopes
        if self.extra:
            doc["extra"] = self.extra
        return doc


def aggregate_rel_err(trajectories) -> Optional[dict]:
    """Median and quartile curves of relative error on the shared
    recording grid. Only completed replications enter the aggregate."""
    runs = [t for t in trajectories if t.rel_err is not None]
    if not runs:
        return None
    iters = runs[0].iters
    curves = np.vstack([t.rel_err for t in runs
                        if len(t.rel_err) == len(iters)])
    return {
        "iters": iters.tolist(),
        "median": np.median(curves, axis=0).tolist(),
        "q25": np.quantile(curves, 0.25, axis=0).tolist(),
        "q75": np.quantile(curves, 0.75, axis=0).tolist(),
        "count": int(curves.shape[0]),
    }


TRAJ_HEADER_FIXED = ("iter", "rel_err", "excess_risk", "run_id", "seed")


def _traj_rows(traj: Trajectory, run_id: int, seed: int):
    d = traj.thetas.shape[1]
    for k in range(len(traj.iters)):
        row = [str(int(traj.iters[k]))]
        row += [_fmt(traj.thetas[k, j]) for j in range(d)]
        row.append("" if traj.rel_err is None else _fmt(traj.rel_err[k]))
        row.append("" if traj.excess_risk is None else _fmt(traj.excess_risk[k]))
        row += [str(run_id), str(seed)]
        yield row


def _traj_header(d: int):
    return (["iter"] + [f"theta_{j}" for j in range(d)]
            + ["rel_err", "excess_risk", "run_id", "seed"])


def write_trajectories(out_dir: str, trajectories, seeds) -> list:
    """One merged trajectories.csv plus one file per replication."""
    os.makedirs(out_dir, exist_ok=True)
    rep_dir = os.path.join(out_dir, "trajectories")
    os.makedirs(rep_dir, exist_ok=True)
    d = trajectories[0].thetas.shape[1]
    header = _traj_header(d)
    paths = []

    merged = os.path.join(out_dir, "trajectories.csv")
    with open(merged, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for run_id, (traj, seed) in enumerate(zip(trajectories, seeds)):
            for row in _traj_rows(traj, run_id, seed):
                writer.writerow(row)
    paths.append(merged)

    for run_id, (traj, seed) in enumerate(zip(trajectories, seeds)):
        p = os.path.join(rep_dir, f"rep-{run_id:03d}.csv")
        with open(p, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for row in _traj_rows(traj, run_id, seed):
                writer.writerow(row)
        paths.append(p)
    return paths


def read_trajectories(path: str) -> dict:
    """Parse a merged trajectories.csv back into per-run arrays."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        theta_cols = [i for i, h in enumerate(header) if h.startswith("theta_")]
        idx = {h: i for i, h in enumerate(header)}
        runs = {}
        for row in reader:
            rid = int(row[idx["run_id"]])
            entry = runs.setdefault(rid, {"iter": [], "theta": [], "rel_err": [],
                                          "seed": int(row[idx["seed"]])})
            entry["iter"].append(int(row[idx["iter"]]))
            entry["theta"].append([float(row[i]) for i in theta_cols])
            rel = row[idx["rel_err"]]
            entry["rel_err"].append(float(rel) if rel else np.nan)
    for entry in runs.values():
        entry["iter"] = np.array(entry["iter"])
        entry["theta"] = np.array(entry["theta"])
        entry["rel_err"] = np.array(entry["rel_err"])
    return runs


def write_summary(out_dir: str, report: Report) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "summary.json")
    with open(path, "w") as fh:
        json.dump(report.summary_dict(), fh, sort_keys=True, indent=2)
        fh.write("\n")
    return path
