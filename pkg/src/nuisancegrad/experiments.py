"""Experiment orchestration: validated run configurations, replication
workers, and the study protocols (batch-regime comparisons, controlled
bias-scaling studies, interleaved estimation, the synthetic real-data
pipeline). The command-line harness and the acceptance suite both drive
these entry points.
"""

from __future__ import annotations

import copy
import os

import numpy as np
from joblib import Parallel, delayed

from .errors import ConfigError, NuisanceGradError, Unsupported
from .metrics import excess_risk_curve, make_eval_batch, slope_fit
from .nuisance import (LogisticOnFeatures, RFFMap, RidgeOnFeatures,
                       StreamingRidge, as_nuisance)
from .optimize import (InterleaveSchedule, OptConfig, Trajectory,
                       averaged_sgd_run, interleaved_run, osgd_run, sgd_run)
from .ortho import (NoOracle, OrthoOperator, estimate_operator,
                    perturbed_operator, plm_true_operator, zero_operator)
from .problems import (MonteCarloCfg, constant_nuisance, make_oracle,
                       unit_direction, PROBLEM_IDS)
from .report import Report, aggregate_rel_err, write_summary, write_trajectories
from .rng import Rng
from .simdata import (BatchStream, DgpConfig, SampleStream, TabularSource,
                      draw_batch, ingest_csv, split_streams)

EXPERIMENTS = ("single", "slope_study", "osgd_interpolation", "variance_floor",
               "asgd_rate", "interleave_study", "batch_regimes", "real_data")

JOBS_ENV_VAR = "NUISANCE_GRAD_JOBS"


def resolve_jobs(flag_value=None) -> int:
    """Worker count: the environment variable overrides the flag."""
    env = os.environ.get(JOBS_ENV_VAR)
    if env is not None:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(JOBS_ENV_VAR, f"not an integer: {env!r}")
    if flag_value is None:
        return 1
    return max(1, int(flag_value))


# ---------------------------------------------------------------------------
# Configuration


_DEFAULTS = {
    "problem": "plm_nonorth",
    "replications": 20,
    "seed": 20_260_809,
    "optimizer": "sgd",
}


def _require(cfg, key, typ, path):
    if key not in cfg:
        raise ConfigError(f"{path}{key}", "missing required field")
    val = cfg[key]
    if typ is float and isinstance(val, int):
        val = float(val)
    if not isinstance(val, typ):
        raise ConfigError(f"{path}{key}", f"expected {typ.__name__}, got {type(val).__name__}")
    return val


def validate_config(raw: dict) -> dict:
    """Normalize and check a run configuration; raises ConfigError with
    the offending field path."""
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "configuration must be a JSON object")
    cfg = dict(_DEFAULTS)
    cfg.update(copy.deepcopy(raw))  # callers keep their config untouched

    exp = cfg.get("experiment")
    if exp not in EXPERIMENTS:
        raise ConfigError("experiment", f"unknown experiment {exp!r}; "
                                        f"expected one of {EXPERIMENTS}")
    if cfg["problem"] not in PROBLEM_IDS:
        raise ConfigError("problem", f"unknown problem id {cfg['problem']!r}; "
                                     f"expected one of {PROBLEM_IDS}")
    if not isinstance(cfg["replications"], int) or cfg["replications"] < 1:
        raise ConfigError("replications", "must be an integer >= 1")
    if not isinstance(cfg["seed"], int):
        raise ConfigError("seed", "must be an integer")

    if exp == "real_data":
        tab = cfg.get("tabular")
        if not isinstance(tab, dict):
            raise ConfigError("tabular", "real_data needs a tabular source mapping")
        _require(tab, "path", str, "tabular.")
    else:
        dgp = cfg.setdefault("dgp", {})
        if not isinstance(dgp, dict):
            raise ConfigError("dgp", "must be a mapping")
        lam = dgp.setdefault("lam", 0.5)
        delta = dgp.setdefault("delta", 0.05)
        if not (0 <= lam < 1 + delta):
            raise ConfigError("dgp.lam", f"needs 0 <= lam < 1 + delta, got {lam}")

    opt = cfg.setdefault("opt", {})
    if not isinstance(opt, dict):
        raise ConfigError("opt", "must be a mapping")
    if exp in ("single", "batch_regimes", "real_data", "interleave_study"):
        eta = opt.setdefault("eta", 1e-3)
        if not (isinstance(eta, (int, float)) and eta >= 0):
            raise ConfigError("opt.eta", "must be a nonnegative number")
        n_iters = opt.setdefault("n_iters", 20_000)
        if not (isinstance(n_iters, int) and n_iters >= 1):
            raise ConfigError("opt.n_iters", "must be an integer >= 1")
        opt.setdefault("record_every", max(1, n_iters // 100))

    if exp == "single":
        nspec = cfg.setdefault("nuisance", {"mode": "true"})
        mode = nspec.get("mode")
        if mode not in ("true", "perturbed", "batch", "zero"):
            raise ConfigError("nuisance.mode", f"unknown mode {mode!r}")
        if mode == "perturbed" and "r" not in nspec:
            raise ConfigError("nuisance.r", "perturbed mode needs a scale r")
        if mode == "batch":
            m = nspec.get("m")
            if not (isinstance(m, int) and m >= 1):
                raise ConfigError("nuisance.m", "batch mode needs integer m >= 1")
        ospec = cfg.setdefault("operator", {"mode": "none"})
        omode = ospec.get("mode")
        if omode not in ("none", "true", "estimated", "perturbed", "zero"):
            raise ConfigError("operator.mode", f"unknown mode {omode!r}")
        if cfg["optimizer"] == "interleaved":
            raise ConfigError("optimizer",
                              'interleaved runs use {"experiment": "interleave_study"}')
        if cfg["optimizer"] not in ("sgd", "osgd", "avg"):
            raise ConfigError("optimizer", f"unknown optimizer {cfg['optimizer']!r}")
        if cfg["optimizer"] == "osgd" and omode == "none":
            raise ConfigError("operator.mode", "osgd needs an operator")

    if exp in ("slope_study", "osgd_interpolation"):
        rs = cfg.setdefault("rs", [0.4, 0.2, 0.1, 0.05])
        if not all(isinstance(r, (int, float)) and r > 0 for r in rs):
            raise ConfigError("rs", "perturbation scales must be positive numbers")
        opt.setdefault("eta", 1e-3)
        opt.setdefault("n_iters", 20_000)
        opt.setdefault("record_every", 500)
        cfg.setdefault("tail_frac", 0.25)

    if exp == "variance_floor":
        eta = opt.setdefault("eta", 0.02)
        opt.setdefault("n_iters", 8_000)
        opt.setdefault("record_every", 500)

    if exp == "asgd_rate":
        opt.setdefault("eta", 0.03)
        cps = cfg.setdefault("checkpoints", [1_000, 3_162, 10_000, 31_623, 100_000])
        opt.setdefault("n_iters", int(max(cps)))
        opt.setdefault("record_every", 1_000)

    if exp == "interleave_study":
        il = cfg.setdefault("interleave", {})
        il.setdefault("target_block", 2_000)
        il.setdefault("nuisance_block", 2_000)
        il.setdefault("rounds", 10)
        il.setdefault("minibatch", 1)
        il.setdefault("warmup", 200)
        opt.setdefault("eta", 5e-4)

    if exp == "batch_regimes":
        cfg.setdefault("ms", [500, 10_000])
        cfg.setdefault("k", 10_000)
        opt.setdefault("eta", 2e-4)
        opt.setdefault("n_iters", 40_000)

    if exp == "real_data":
        opt.setdefault("eta", 1e-3)
        opt.setdefault("n_iters", 20_000)
        opt.setdefault("record_every", 200)
        cfg.setdefault("nuisance_rows", 5_000)

    return cfg


def build_dgp(cfg: dict) -> DgpConfig:
    d = cfg.get("dgp", {})
    return DgpConfig(
        lam=float(d.get("lam", 0.5)),
        delta=float(d.get("delta", 0.05)),
        theta0=tuple(d.get("theta0", (-0.5, 1.0))),
        mu_x=tuple(d.get("mu_x", (1.0, 1.0))),
        mu_w=tuple(d.get("mu_w", (2.0, 2.0))),
        noise_sd_eps=float(d.get("noise_sd_eps", 1.0)),
        noise_sd_xi=float(d.get("noise_sd_xi", 1.0)),
    )


def build_tabular(cfg: dict) -> TabularSource:
    t = cfg["tabular"]
    kwargs = {}
    for key in ("x_col", "theta0", "noise_scale", "delimiter"):
        if key in t:
            kwargs[key] = t[key]
    if "w_cols" in t:
        kwargs["w_cols"] = tuple(t["w_cols"])
    return TabularSource(path=t["path"], **kwargs)


# ---------------------------------------------------------------------------
# Nuisance and operator builders


def fit_batch_nuisance(kind: str, batch, seed: int, n_components: int = 20,
                       gamma="auto", reg_scale: float = 0.01):
    """The full-batch fitting recipe: one feature map on the controls,
    then exact ridge fits per component (penalized logistic for an
    exactly binary input coordinate)."""
    rff = RFFMap(n_components=n_components, gamma=gamma, seed=seed).fit(batch.w)
    if kind == "plm_nonorth":
        model = RidgeOnFeatures(rff, reg_scale=reg_scale).fit(batch.w, batch.u)
        return as_nuisance({"g": model}, kind), {"g": model}
    if kind == "plm_orth":
        from .ortho import _is_binary
        g_y = RidgeOnFeatures(rff, reg_scale=reg_scale).fit(batch.w, batch.y)
        coords = []
        for j in range(batch.x.shape[1]):
            col = batch.x[:, j]
            if _is_binary(col):
                coords.append(LogisticOnFeatures(rff, reg_scale=reg_scale).fit(batch.w, col))
            else:
                coords.append(RidgeOnFeatures(rff, reg_scale=reg_scale).fit(batch.w, col))
        return as_nuisance({"g_y": g_y, "g_x": coords}, kind), {"g_y": g_y, "g_x": coords}
    raise Unsupported(f"no batch fitting recipe for kind {kind!r}")


def make_nuisance(oracle, dgp, spec: dict, rng: Rng, nuisance_stream=None):
    mode = spec.get("mode", "true")
    if mode == "true":
        return oracle.true_nuisance(dgp)
    if mode == "zero":
        return constant_nuisance(oracle.kind, dim=oracle.dim)
    if mode == "perturbed":
        mc = MonteCarloCfg(n=200_000, seed=spec.get("norm_seed", 1))
        h = unit_direction(oracle.kind, dgp, mc, form=spec.get("direction", "default"))
        return oracle.true_nuisance(dgp).axpy(float(spec["r"]), h)
    if mode == "batch":
        m = int(spec["m"])
        batch = (nuisance_stream.next_batch(m) if nuisance_stream is not None
                 else draw_batch(rng.child(), dgp, m))
        fit_seed = int(rng.integers(0, 2 ** 31))
        g, _ = fit_batch_nuisance(oracle.kind, batch, fit_seed,
                                  n_components=spec.get("n_components", 20),
                                  gamma=spec.get("gamma", "auto"),
                                  reg_scale=spec.get("reg_scale", 0.01))
        return g
    raise ConfigError("nuisance.mode", f"unknown mode {mode!r}")


def make_operator(oracle, dgp, spec: dict, rng: Rng):
    mode = spec.get("mode", "none")
    if mode == "none":
        return None
    if mode == "zero":
        return zero_operator(oracle.dim)
    if mode == "true":
        return plm_true_operator(dgp)
    if mode == "estimated":
        k = int(spec.get("k", 10_000))
        batch = draw_batch(rng.child(), dgp, k)
        fit_seed = int(rng.integers(0, 2 ** 31))
        rff = RFFMap(n_components=spec.get("n_components", 50),
                     gamma=spec.get("gamma", "auto"), seed=fit_seed).fit(batch.w)
        return estimate_operator(rff, batch.x, batch.w,
                                 reg_scale=spec.get("reg_scale", 0.01))
    if mode == "perturbed":
        mc = MonteCarloCfg(n=200_000, seed=spec.get("norm_seed", 1))
        h = unit_direction("plm_nonorth", dgp, mc,
                           form=spec.get("direction", "default"))
        bump = h.parts["g"]
        return perturbed_operator(plm_true_operator(dgp), float(spec["rho"]), bump)
    raise ConfigError("operator.mode", f"unknown mode {mode!r}")


# ---------------------------------------------------------------------------
# Replication workers (module level so the process pool can import them)


def _single_replication(cfg: dict, seed: int) -> Trajectory:
    dgp = build_dgp(cfg)
    oracle = make_oracle(cfg["problem"], dim=dgp.d)
    rng = Rng(seed)
    streams = split_streams(rng.child(), dgp, {})
    ghat = make_nuisance(oracle, dgp, cfg.get("nuisance", {"mode": "true"}),
                         rng, nuisance_stream=streams["nuisance"])
    gamma = make_operator(oracle, dgp, cfg.get("operator", {"mode": "none"}), rng)
    opt = cfg["opt"]
    occfg = OptConfig(eta=float(opt["eta"]), n_iters=int(opt["n_iters"]),
                      record_every=int(opt["record_every"]), seed=seed)
    theta0 = np.asarray(opt.get("theta0", np.zeros(oracle.dim)), dtype=float)
    theta_star = oracle.target(dgp)

    kind = cfg["optimizer"]
    if kind == "sgd":
        traj = sgd_run(oracle, ghat, theta0, occfg, streams["target"], theta_star)
    elif kind == "avg":
        traj = averaged_sgd_run(oracle, ghat, theta0, occfg, streams["target"], theta_star)
    elif kind == "osgd":
        traj = osgd_run(NoOracle(oracle, gamma), ghat, theta0, occfg,
                        streams["target"], theta_star)
    else:
        raise ConfigError("optimizer", f"unknown optimizer {kind!r}")

    g0 = oracle.true_nuisance(dgp)
    eval_batch = make_eval_batch(dgp, MonteCarloCfg(n=4096, seed=cfg["seed"] + 1))
    traj.excess_risk = excess_risk_curve(oracle, traj.thetas, g0, eval_batch, theta_star)
    return traj


def _replication_seeds(master_seed: int, n: int) -> list:
    # fixed affine schedule keeps seeds human-readable in artifacts
    return [master_seed + 1000 * i for i in range(n)]


def _annotate(exc, idx, seed):
    try:
        return type(exc)(f"replication {idx} (seed {seed}): {exc}")
    except TypeError:  # exception type with a non-message signature
        return exc


def run_replications(worker, cfg: dict, jobs: int = 1):
    seeds = _replication_seeds(cfg["seed"], cfg["replications"])
    if jobs > 1:
        results = Parallel(n_jobs=jobs)(delayed(worker)(cfg, s) for s in seeds)
    else:
        results = []
        for idx, seed in enumerate(seeds):
            try:
                results.append(worker(cfg, seed))
            except NuisanceGradError as exc:
                raise _annotate(exc, idx, seed) from exc
    return seeds, results


# ---------------------------------------------------------------------------
# Studies


def run_single(cfg: dict, jobs: int = 1) -> Report:
    seeds, trajs = run_replications(_single_replication, cfg, jobs)
    return Report(experiment="single", config=cfg, master_seed=cfg["seed"],
                  seeds=seeds, trajectories=trajs,
                  aggregate=aggregate_rel_err(trajs))


def _coupled_pair(cfg: dict, seed: int, r: float, use_operator: bool,
                  rho: float = 0.0):
    """Run the perturbed-nuisance chain and the true-nuisance floor chain
    on the same sample stream; returns tail means of both paths and of
    their difference. The pathwise difference is the floor subtraction."""
    dgp = build_dgp(cfg)
    oracle = make_oracle(cfg["problem"], dim=dgp.d)
    mc = MonteCarloCfg(n=200_000, seed=1)
    h = unit_direction(oracle.kind, dgp, mc, form=cfg.get("direction", "default"))
    g0 = oracle.true_nuisance(dgp)
    ghat = g0.axpy(r, h)
    theta_star = oracle.target(dgp)
    opt = cfg["opt"]
    occfg = OptConfig(eta=float(opt["eta"]), n_iters=int(opt["n_iters"]),
                      record_every=int(opt["record_every"]), seed=seed,
                      keep_path=True)
    theta0 = np.zeros(oracle.dim)

    if use_operator:
        base = plm_true_operator(dgp)
        if rho != 0.0:
            hb = unit_direction("plm_nonorth", dgp, mc,
                                form=cfg.get("direction", "default"))
            gamma = perturbed_operator(base, rho, hb.parts["g"])
        else:
            gamma = base
        driver = lambda g, stream: osgd_run(NoOracle(oracle, gamma), g, theta0,
                                            occfg, stream, theta_star)
    else:
        driver = lambda g, stream: sgd_run(oracle, g, theta0, occfg, stream,
                                           theta_star)

    tail = cfg.get("tail_frac", 0.25)
    stream_r = SampleStream(Rng(seed), dgp)
    traj_r = driver(ghat, stream_r)
    stream_0 = SampleStream(Rng(seed), dgp)
    traj_0 = driver(g0, stream_0)

    lo = int((1.0 - tail) * (traj_r.path.shape[0] - 1))
    delta = traj_r.path[lo:] - traj_0.path[lo:]
    return {
        "delta_mean": delta.mean(axis=0),
        "delta_sq_mean": float(np.mean(np.sum(delta ** 2, axis=1))),
        "traj_r": _strip_path(traj_r),
        "traj_0": _strip_path(traj_0),
    }


def _strip_path(traj: Trajectory) -> Trajectory:
    traj.path = None
    return traj


def _slope_worker(cfg: dict, seed: int) -> dict:
    out = {}
    for r in cfg["rs"]:
        out[float(r)] = _coupled_pair(cfg, seed, float(r), use_operator=False)
    return out


def run_slope_study(cfg: dict, jobs: int = 1) -> Report:
    """Floor-subtracted steady-state error against the perturbation scale.

    Per seed, the perturbed and unperturbed chains share one stream; the
    systematic offset of the perturbed chain is the norm of the averaged
    pathwise difference over the tail window, pooled over seeds.
    """
    seeds, results = run_replications(_slope_worker, cfg, jobs)
    rs = [float(r) for r in cfg["rs"]]
    biases = []
    for r in rs:
        deltas = np.array([res[r]["delta_mean"] for res in results])
        biases.append(float(np.linalg.norm(deltas.mean(axis=0))))
    fit = slope_fit(list(zip(rs, biases)))
    trajs, traj_seeds = [], []
    for seed, res in zip(seeds, results):
        for r in rs:
            trajs.append(res[r]["traj_r"])
            traj_seeds.append(seed)
    for seed, res in zip(seeds, results):
        trajs.append(res[rs[0]]["traj_0"])
        traj_seeds.append(seed)
    return Report(
        experiment="slope_study", config=cfg, master_seed=cfg["seed"],
        seeds=seeds, trajectories=trajs, traj_seeds=traj_seeds,
        aggregate=aggregate_rel_err(trajs),
        slopes={"rs": rs, "bias": biases, "slope": fit.slope,
                "intercept": fit.intercept, "r2": fit.r2},
    )


def _osgd_worker(cfg: dict, seed: int) -> dict:
    out = {"true_op": {}, "prop_op": {}}
    for r in cfg["rs"]:
        out["true_op"][float(r)] = _coupled_pair(cfg, seed, float(r),
                                                 use_operator=True, rho=0.0)
        out["prop_op"][float(r)] = _coupled_pair(cfg, seed, float(r),
                                                 use_operator=True, rho=float(r))
    return out


def run_osgd_interpolation(cfg: dict, jobs: int = 1) -> Report:
    """Orthogonalized runs under controlled nuisance and operator error.

    With the true operator the oracle is exactly first-order insensitive,
    so the r-dependence of the steady state sits in the squared scale:
    the study reports the tail mean of the squared pathwise difference
    (floor run subtracted sample-by-sample) and its log-log slope in r.
    With operator error rho proportional to r it reports squared
    systematic bias on both branches and the nonnegative two-term fit
    in (r^4, r^2 rho^2).
    """
    from .metrics import nonneg_two_term_fit

    if cfg["problem"] != "plm_nonorth":
        raise ConfigError("problem", "the orthogonalized study runs on plm_nonorth")
    seeds, results = run_replications(_osgd_worker, cfg, jobs)
    rs = [float(r) for r in cfg["rs"]]

    delta_sq = []
    bias_true = []
    bias_prop = []
    for r in rs:
        delta_sq.append(float(np.mean([res["true_op"][r]["delta_sq_mean"]
                                       for res in results])))
        d_true = np.array([res["true_op"][r]["delta_mean"] for res in results])
        bias_true.append(float(np.linalg.norm(d_true.mean(axis=0))))
        d_prop = np.array([res["prop_op"][r]["delta_mean"] for res in results])
        bias_prop.append(float(np.linalg.norm(d_prop.mean(axis=0))))

    fit = slope_fit(list(zip(rs, delta_sq)))
    r_des = rs + rs
    rho_des = [0.0] * len(rs) + rs
    sq_des = [b ** 2 for b in bias_true] + [b ** 2 for b in bias_prop]
    c1, c2, resid = nonneg_two_term_fit(r_des, rho_des, sq_des)

    trajs, traj_seeds = [], []
    for seed, res in zip(seeds, results):
        for r in rs:
            trajs.append(res["true_op"][r]["traj_r"])
            traj_seeds.append(seed)
    return Report(
        experiment="osgd_interpolation", config=cfg, master_seed=cfg["seed"],
        seeds=seeds, trajectories=trajs, traj_seeds=traj_seeds,
        aggregate=aggregate_rel_err(trajs),
        slopes={"rs": rs, "delta_sq": delta_sq, "slope_sq": fit.slope,
                "bias_true_op": bias_true, "bias_prop_op": bias_prop,
                "fit_c1": c1, "fit_c2": c2, "fit_rel_residual": resid},
    )


def _floor_worker(cfg: dict, seed: int) -> dict:
    dgp = build_dgp(cfg)
    oracle = make_oracle(cfg["problem"], dim=dgp.d)
    g0 = oracle.true_nuisance(dgp)
    theta_star = oracle.target(dgp)
    opt = cfg["opt"]
    out = {}
    for eta in (float(opt["eta"]), float(opt["eta"]) / 2.0):
        occfg = OptConfig(eta=eta, n_iters=int(opt["n_iters"]),
                          record_every=int(opt["record_every"]), seed=seed,
                          keep_path=True)
        stream = SampleStream(Rng(seed), dgp)
        traj = sgd_run(oracle, g0, np.zeros(oracle.dim), occfg, stream, theta_star)
        lo = traj.path.shape[0] // 2
        dist = traj.path[lo:] - theta_star
        out[eta] = float(np.mean(np.sum(dist ** 2, axis=1)))
    return out


def run_variance_floor(cfg: dict, jobs: int = 1) -> Report:
    """Terminal mean squared error at eta and eta / 2, true nuisance."""
    seeds, results = run_replications(_floor_worker, cfg, jobs)
    eta = float(cfg["opt"]["eta"])
    mse_hi = float(np.median([res[eta] for res in results]))
    mse_lo = float(np.median([res[eta / 2.0] for res in results]))
    return Report(
        experiment="variance_floor", config=cfg, master_seed=cfg["seed"],
        seeds=seeds, trajectories=[],
        extra={"eta": eta, "mse_at_eta": mse_hi, "mse_at_half_eta": mse_lo,
               "ratio": mse_hi / mse_lo},
    )


def _asgd_worker(cfg: dict, seed: int) -> dict:
    dgp = build_dgp(cfg)
    oracle = make_oracle(cfg["problem"], dim=dgp.d)
    g0 = oracle.true_nuisance(dgp)
    theta_star = oracle.target(dgp)
    opt = cfg["opt"]
    occfg = OptConfig(eta=float(opt["eta"]), n_iters=int(opt["n_iters"]),
                      record_every=int(opt["record_every"]), seed=seed,
                      keep_path=True)
    stream = SampleStream(Rng(seed), dgp)
    traj = averaged_sgd_run(oracle, g0, np.zeros(oracle.dim), occfg, stream,
                            theta_star)
    cps = [int(c) for c in cfg["checkpoints"]]
    sq = {c: float(np.sum((traj.path[c] - theta_star) ** 2)) for c in cps}
    return {"sq": sq, "traj": _strip_path(traj)}


def run_asgd_rate(cfg: dict, jobs: int = 1) -> Report:
    """Mean squared error of the running-average iterate at log-spaced
    checkpoints, with the fitted log-log decay rate."""
    seeds, results = run_replications(_asgd_worker, cfg, jobs)
    cps = [int(c) for c in cfg["checkpoints"]]
    mses = [float(np.mean([res["sq"][c] for res in results])) for c in cps]
    fit = slope_fit(list(zip(cps, mses)))
    trajs = [res["traj"] for res in results]
    return Report(
        experiment="asgd_rate", config=cfg, master_seed=cfg["seed"],
        seeds=seeds, trajectories=trajs, aggregate=aggregate_rel_err(trajs),
        slopes={"checkpoints": cps, "mse": mses, "slope": fit.slope, "r2": fit.r2},
    )


class StreamUpdater:
    """Streaming nuisance (and optional operator) state for interleaving.

    Holds one feature map and minibatch-gradient ridge states for the
    scalar control function and, when the operator is co-updated, for
    each input coordinate's conditional mean. All states warm-start from
    closed-form fits on a small warmup batch, which is also the frozen
    baseline's nuisance.
    """

    def __init__(self, rff: RFFMap, warm_batch, minibatch: int = 1,
                 step=None, with_operator: bool = False):
        self.minibatch = minibatch
        self.with_operator = with_operator
        self.kind = "plm_nonorth"
        reg = 0.01 / max(1, len(warm_batch))
        self.ridge_g = StreamingRidge(rff, step=step, reg=reg)
        self.ridge_g.warm_start_from(
            RidgeOnFeatures(rff).fit(warm_batch.w, warm_batch.u))
        self.coord_models = []
        if with_operator:
            for j in range(warm_batch.x.shape[1]):
                sr = StreamingRidge(rff, step=step, reg=reg)
                sr.warm_start_from(
                    RidgeOnFeatures(rff).fit(warm_batch.w, warm_batch.x[:, j]))
                self.coord_models.append(sr)

    def update(self, batch):
        self.ridge_g.sgd_step(batch.w, batch.u)
        for j, sr in enumerate(self.coord_models):
            sr.sgd_step(batch.w, batch.x[:, j])

    def current(self):
        g = as_nuisance({"g": self.ridge_g}, self.kind)
        gamma = None
        if self.with_operator:
            def predict(points, models=tuple(self.coord_models)):
                return np.column_stack([m.predict(points) for m in models])
            gamma = OrthoOperator(len(self.coord_models), predict,
                                  label="stream-estimated")
        return g, gamma


def _interleave_worker(cfg: dict, seed: int) -> dict:
    dgp = build_dgp(cfg)
    oracle = make_oracle("plm_nonorth", dim=dgp.d)
    theta_star = oracle.target(dgp)
    il = cfg["interleave"]
    opt = cfg["opt"]
    sched = InterleaveSchedule(target_block=int(il["target_block"]),
                               nuisance_block=int(il["nuisance_block"]),
                               rounds=int(il["rounds"]))
    total = sched.target_block * sched.rounds
    occfg = OptConfig(eta=float(opt["eta"]), n_iters=total,
                      record_every=int(opt.get("record_every", 1000)), seed=seed)

    def fresh_updater(with_operator):
        rng = Rng(seed)
        warm = draw_batch(rng.child(), dgp, int(il["warmup"]))
        rff = RFFMap(n_components=il.get("n_components", 20), gamma="auto",
                     seed=seed + 555).fit(warm.w)
        return StreamUpdater(rff, warm, minibatch=int(il["minibatch"]),
                             step=il.get("stream_step"),
                             with_operator=with_operator)

    out = {}
    for mode in ("frozen", "sgd", "osgd"):
        upd = fresh_updater(with_operator=(mode == "osgd"))
        # frozen keeps the warm-start state: zero streaming steps per round
        msched = InterleaveSchedule(
            target_block=sched.target_block,
            nuisance_block=0 if mode == "frozen" else sched.nuisance_block,
            rounds=sched.rounds)
        st = SampleStream(Rng(seed + 1), dgp)
        sn = SampleStream(Rng(seed + 2), dgp)
        traj = interleaved_run(oracle, st, sn, msched, upd, occfg,
                               theta_star=theta_star,
                               orthogonalize=(mode == "osgd"))
        out[mode] = traj
    return out


def run_interleave_study(cfg: dict, jobs: int = 1) -> Report:
    """Frozen-initial-nuisance runs against interleaved plain and
    orthogonalized runs at equal total target iterations; streams are
    shared across the three arms of each seed."""
    seeds, results = run_replications(_interleave_worker, cfg, jobs)
    med = {mode: float(np.median([res[mode].rel_err[-1] for res in results]))
           for mode in ("frozen", "sgd", "osgd")}
    trajs, traj_seeds = [], []
    for seed, res in zip(seeds, results):
        for mode in ("frozen", "sgd", "osgd"):
            trajs.append(res[mode])
            traj_seeds.append(seed)
    return Report(
        experiment="interleave_study", config=cfg, master_seed=cfg["seed"],
        seeds=seeds, trajectories=trajs, traj_seeds=traj_seeds,
        extra={"median_final_rel_err": med},
    )


def _batch_regime_worker(cfg: dict, seed: int) -> dict:
    dgp = build_dgp(cfg)
    opt = cfg["opt"]
    rng = Rng(seed)
    out = {}
    occfg = OptConfig(eta=float(opt["eta"]), n_iters=int(opt["n_iters"]),
                      record_every=int(opt.get("record_every", 1000)), seed=seed)

    for problem in ("plm_nonorth", "plm_orth"):
        oracle = make_oracle(problem, dim=dgp.d)
        theta_star = oracle.target(dgp)
        for m in cfg["ms"]:
            fit_batch = draw_batch(rng.child(), dgp, int(m))
            ghat, _ = fit_batch_nuisance(problem, fit_batch,
                                         seed=int(rng.integers(0, 2 ** 31)))
            stream = SampleStream(Rng(seed + 1), dgp)
            traj = sgd_run(oracle, ghat, np.zeros(oracle.dim), occfg, stream,
                           theta_star)
            out[(problem, int(m))] = float(traj.rel_err[-1])

    # orthogonalized arm: estimated nuisance and operator at the large sizes
    oracle = make_oracle("plm_nonorth", dim=dgp.d)
    theta_star = oracle.target(dgp)
    m_big = int(max(cfg["ms"]))
    k = int(cfg["k"])
    fit_batch = draw_batch(rng.child(), dgp, m_big)
    ghat, _ = fit_batch_nuisance("plm_nonorth", fit_batch,
                                 seed=int(rng.integers(0, 2 ** 31)))
    op_batch = draw_batch(rng.child(), dgp, k)
    rff_op = RFFMap(n_components=50, gamma="auto",
                    seed=int(rng.integers(0, 2 ** 31))).fit(op_batch.w)
    gamma_hat = estimate_operator(rff_op, op_batch.x, op_batch.w,
                                  reg_scale=0.01)
    stream = SampleStream(Rng(seed + 2), dgp)
    traj = osgd_run(NoOracle(oracle, gamma_hat), ghat, np.zeros(oracle.dim),
                    occfg, stream, theta_star)
    out[("osgd_est", m_big)] = float(traj.rel_err[-1])

    stream = SampleStream(Rng(seed + 2), dgp)
    traj = osgd_run(NoOracle(oracle, plm_true_operator(dgp)),
                    oracle.true_nuisance(dgp), np.zeros(oracle.dim), occfg,
                    stream, theta_star)
    out[("osgd_true", m_big)] = float(traj.rel_err[-1])
    return out


def run_batch_regimes(cfg: dict, jobs: int = 1) -> Report:
    """Terminal error under small and large nuisance fitting samples, for
    both losses, plus the orthogonalized arm against its idealized twin."""
    seeds, results = run_replications(_batch_regime_worker, cfg, jobs)
    keys = results[0].keys()
    med = {f"{k[0]}@{k[1]}": float(np.median([res[k] for res in results]))
           for k in keys}
    return Report(
        experiment="batch_regimes", config=cfg, master_seed=cfg["seed"],
        seeds=seeds, trajectories=[], extra={"median_final_rel_err": med},
    )


def _real_data_worker(cfg: dict, seed: int) -> Trajectory:
    src = build_tabular(cfg)
    rng = Rng(seed)
    table = ingest_csv(src, rng.child())
    n_rows = len(table)
    m = min(int(cfg["nuisance_rows"]), n_rows // 2)
    perm = rng.permutation(n_rows)
    fit_part = table.subset(perm[:m])
    target_part = table.subset(perm[m:])

    oracle = make_oracle("plm_orth", dim=1)
    ghat, _ = fit_batch_nuisance("plm_orth", fit_part,
                                 seed=int(rng.integers(0, 2 ** 31)))
    opt = cfg["opt"]
    occfg = OptConfig(eta=float(opt["eta"]), n_iters=int(opt["n_iters"]),
                      record_every=int(opt["record_every"]), seed=seed)
    stream = BatchStream(rng.child(), target_part)
    theta_star = oracle.target(src)
    return sgd_run(oracle, ghat, np.zeros(1), occfg, stream, theta_star)


def run_real_data(cfg: dict, jobs: int = 1) -> Report:
    seeds, trajs = run_replications(_real_data_worker, cfg, jobs)
    finals = [float(t.theta_final[0]) for t in trajs]
    src = build_tabular(cfg)
    return Report(
        experiment="real_data", config=cfg, master_seed=cfg["seed"],
        seeds=seeds, trajectories=trajs, aggregate=aggregate_rel_err(trajs),
        extra={"theta_estimates": finals,
               "theta_target": src.theta0,
               "median_theta": float(np.median(finals))},
    )


_RUNNERS = {
    "single": run_single,
    "slope_study": run_slope_study,
    "osgd_interpolation": run_osgd_interpolation,
    "variance_floor": run_variance_floor,
    "asgd_rate": run_asgd_rate,
    "interleave_study": run_interleave_study,
    "batch_regimes": run_batch_regimes,
    "real_data": run_real_data,
}


def run_experiment(raw_cfg: dict, out_dir=None, jobs: int = 1) -> Report:
    """Validate, execute, and (when out_dir is given) write artifacts."""
    cfg = validate_config(raw_cfg)
    report = _RUNNERS[cfg["experiment"]](cfg, jobs=jobs)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        if report.trajectories:
            seeds = report.traj_seeds or report.seeds
            write_trajectories(out_dir, report.trajectories, seeds)
        write_summary(out_dir, report)
    return report
