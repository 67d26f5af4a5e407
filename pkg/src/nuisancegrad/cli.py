"""Command-line harness.

Subcommands: gen-data, fit-nuisance, fit-operator, run, report, verify.
Exit codes: 0 success, 2 configuration error, 3 numeric failure,
4 acceptance failure. The NUISANCE_GRAD_JOBS environment variable
overrides --jobs.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .acceptance import run_all
from .errors import ConfigError, NuisanceGradError
from .experiments import (build_dgp, fit_batch_nuisance, resolve_jobs,
                          run_experiment, validate_config)
from .nuisance import RFFMap, model_to_json
from .ortho import estimate_operator, operator_to_json
from .report import read_trajectories
from .rng import Rng
from .simdata import draw_batch, write_synthetic_table
from .svgplot import Series, render_plot

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_ACCEPT = 4


def _load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError("--config", f"no such file: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError("--config", f"invalid JSON: {exc}")


def _add_common(p):
    p.add_argument("--seed", type=int, default=None, help="master seed (u64)")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--jobs", type=int, default=None,
                   help=f"worker count (env NUISANCE_GRAD_JOBS overrides)")
    p.add_argument("--format", choices=("csv", "json", "svg"), default="csv")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nuisance-grad",
        description="Stochastic gradient methods under estimated nuisances")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write simulated or tabular sample files")
    p.add_argument("--config", default=None)
    p.add_argument("--kind", choices=("sim", "table"), default="table")
    p.add_argument("--rows", type=int, default=10_000)
    _add_common(p)

    p = sub.add_parser("fit-nuisance", help="fit nuisance models from simulated data")
    p.add_argument("--config", required=True)
    p.add_argument("--m", type=int, default=10_000)
    _add_common(p)

    p = sub.add_parser("fit-operator", help="fit the orthogonalizing operator")
    p.add_argument("--config", required=True)
    p.add_argument("--k", type=int, default=10_000)
    _add_common(p)

    p = sub.add_parser("run", help="execute an experiment configuration")
    p.add_argument("--config", required=True)
    _add_common(p)

    p = sub.add_parser("report", help="re-aggregate artifacts from a run directory")
    p.add_argument("--run-dir", required=True)
    _add_common(p)

    p = sub.add_parser("verify", help="run the acceptance suite")
    p.add_argument("--criterion", type=int, action="append", default=None,
                   help="run a single criterion (repeatable)")
    _add_common(p)

    return parser


def cmd_gen_data(args) -> int:
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    seed = args.seed if args.seed is not None else 0
    if args.kind == "table":
        path = os.path.join(out, "table.csv")
        write_synthetic_table(path, Rng(seed), args.rows)
        print(path)
        return EXIT_OK
    cfg = validate_config(_load_config(args.config) if args.config
                          else {"experiment": "single"})
    dgp = build_dgp(cfg)
    batch = draw_batch(Rng(seed), dgp, args.rows)
    path = os.path.join(out, "samples.csv")
    cols = ([f"x_{j}" for j in range(batch.x.shape[1])]
            + [f"w_{j}" for j in range(batch.w.shape[1])] + ["y", "u"])
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for i in range(len(batch)):
            row = list(batch.x[i]) + list(batch.w[i]) + [batch.y[i], batch.u[i]]
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    print(path)
    return EXIT_OK


def cmd_fit_nuisance(args) -> int:
    cfg = validate_config(_load_config(args.config))
    dgp = build_dgp(cfg)
    seed = args.seed if args.seed is not None else cfg["seed"]
    batch = draw_batch(Rng(seed), dgp, args.m)
    _, models = fit_batch_nuisance(cfg["problem"], batch, seed=seed)
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    written = []
    for name, model in models.items():
        seq = model if isinstance(model, list) else [model]
        for j, m in enumerate(seq):
            suffix = f"{name}_{j}" if isinstance(model, list) else name
            path = os.path.join(out, f"nuisance_{suffix}.json")
            with open(path, "w") as fh:
                fh.write(model_to_json(m) + "\n")
            written.append(path)
    print("\n".join(written))
    return EXIT_OK


def cmd_fit_operator(args) -> int:
    cfg = validate_config(_load_config(args.config))
    dgp = build_dgp(cfg)
    seed = args.seed if args.seed is not None else cfg["seed"]
    rng = Rng(seed)
    batch = draw_batch(rng.child(), dgp, args.k)
    rff = RFFMap(n_components=50, gamma="auto", seed=seed).fit(batch.w)
    op = estimate_operator(rff, batch.x, batch.w)
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, "operator.json")
    with open(path, "w") as fh:
        fh.write(operator_to_json(op) + "\n")
    print(path)
    return EXIT_OK


def _plot_from_report(report, out_dir):
    agg = report.aggregate
    if not agg:
        return None
    os.makedirs(os.path.join(out_dir, "plots"), exist_ok=True)
    path = os.path.join(out_dir, "plots", "rel_err.svg")
    series = [Series(label="median", xs=agg["iters"], ys=agg["median"],
                     band=(agg["q25"], agg["q75"]))]
    ys = np.asarray(agg["median"])
    render_plot(series, path, title="relative error",
                logy=bool(np.all(ys > 0)), xlabel="iteration",
                ylabel="rel err")
    return path


def cmd_run(args) -> int:
    raw = _load_config(args.config)
    if args.seed is not None:
        raw["seed"] = args.seed
    out = args.out or "run-output"
    jobs = resolve_jobs(args.jobs)
    report = run_experiment(raw, out_dir=out, jobs=jobs)
    if args.format == "svg":
        _plot_from_report(report, out)
    print(os.path.join(out, "summary.json"))
    return EXIT_OK


def cmd_report(args) -> int:
    merged = os.path.join(args.run_dir, "trajectories.csv")
    if not os.path.exists(merged):
        raise ConfigError("--run-dir", f"no trajectories.csv under {args.run_dir}")
    runs = read_trajectories(merged)
    out = args.out or args.run_dir
    os.makedirs(out, exist_ok=True)
    finals = {rid: float(r["rel_err"][-1]) for rid, r in runs.items()
              if len(r["rel_err"])}
    doc = {
        "runs": len(runs),
        "final_rel_err_median": float(np.nanmedian(list(finals.values()))),
        "final_rel_err": finals,
    }
    path = os.path.join(out, "report.json")
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")
    if args.format == "svg":
        series = []
        for rid in sorted(runs)[:6]:
            r = runs[rid]
            series.append(Series(label=f"run {rid}", xs=r["iter"].tolist(),
                                 ys=r["rel_err"].tolist()))
        plot_dir = os.path.join(out, "plots")
        os.makedirs(plot_dir, exist_ok=True)
        render_plot(series, os.path.join(plot_dir, "runs.svg"),
                    title="relative error by run", xlabel="iteration")
    print(path)
    return EXIT_OK


def cmd_verify(args) -> int:
    jobs = resolve_jobs(args.jobs)
    chosen = set(args.criterion) if args.criterion else None
    results = run_all(criteria=chosen, jobs=jobs, work_dir=args.out)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        doc = [{"criterion": r.cid, "title": r.title, "passed": bool(r.passed),
                "seconds": round(r.seconds, 2)} for r in results]
        with open(os.path.join(args.out, "verify_report.json"), "w") as fh:
            json.dump(doc, fh, sort_keys=True, indent=2)
            fh.write("\n")
    n_fail = sum(1 for r in results if not r.passed)
    print(f"{len(results) - n_fail}/{len(results)} criteria passed")
    return EXIT_OK if n_fail == 0 else EXIT_ACCEPT


_COMMANDS = {
    "gen-data": cmd_gen_data,
    "fit-nuisance": cmd_fit_nuisance,
    "fit-operator": cmd_fit_operator,
    "run": cmd_run,
    "report": cmd_report,
    "verify": cmd_verify,
}


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NuisanceGradError as exc:
        print(f"numeric failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
