"""Problem registry and problem-level analyses (norms, diagnostics,
controlled perturbation directions).
"""

from __future__ import annotations

import numpy as np

from ..errors import KindMismatch, Unsupported
from ..linalg import max_eig_sym, min_eig_sym
from ..rng import Rng
from ..simdata import DgpConfig, draw_batch
from .base import (KIND_PARTS, DiagReport, GradOracle, MonteCarloCfg,
                   NuisanceFn, Sample, SampleBatch, batch_from_samples,
                   constant_nuisance, norm_points, nuisance_norm_from_points)
from .cate import CateResOracle, CateUnresOracle, CrrOracle
from .plm import PlmNonorthOracle, PlmOrthOracle

PROBLEM_IDS = ("plm_orth", "plm_nonorth", "cate_unres", "cate_res", "crr")

_REGISTRY = {
    "plm_orth": PlmOrthOracle,
    "plm_nonorth": PlmNonorthOracle,
    "cate_unres": CateUnresOracle,
    "cate_res": CateResOracle,
    "crr": CrrOracle,
}


def make_oracle(problem_id: str, dim: int = 2) -> GradOracle:
    try:
        cls = _REGISTRY[problem_id]
    except KeyError:
        raise KindMismatch(f"unknown problem id {problem_id!r}; "
                           f"expected one of {PROBLEM_IDS}")
    return cls(dim=dim)


def nuisance_norm(oracle: GradOracle, g1: NuisanceFn, g2: NuisanceFn,
                  dgp: DgpConfig, mc: MonteCarloCfg) -> tuple[float, float]:
    """Distance between two nuisances in the problem's own metric,
    estimated on `mc.n` fresh control draws. Returns (estimate, MC SE)."""
    if mc.n < 1000:
        raise ValueError("use at least 1000 Monte-Carlo draws")
    batch = draw_batch(Rng(mc.seed), dgp, mc.n)
    points = batch.w if norm_points(oracle.kind) == "w" else batch.x
    return nuisance_norm_from_points(oracle.kind, g1, g2, points)


def _empirical_hessian(oracle: GradOracle, theta, g, batch, h=1e-5):
    """Mean Hessian of the loss in theta by central differences of the
    analytic score; symmetric up to differencing error."""
    d = len(theta)
    H = np.zeros((d, d))
    for j in range(d):
        step = np.zeros(d)
        step[j] = h
        up = oracle.score_batch(theta + step, g, batch).mean(axis=0)
        dn = oracle.score_batch(theta - step, g, batch).mean(axis=0)
        H[:, j] = (up - dn) / (2 * h)
    return 0.5 * (H + H.T)


def diagnostics(oracle: GradOracle, dgp: DgpConfig, mc: MonteCarloCfg) -> DiagReport:
    """Curvature estimates at the optimum plus a score unbiasedness check.

    Needs the simulation model (analytic target, nuisance, and population
    gradient); problems without those raise Unsupported.
    """
    if not hasattr(oracle, "population_score"):
        raise Unsupported(f"no analytic population gradient for {oracle.problem_id}")
    rng = Rng(mc.seed)
    theta_star = oracle.target(dgp)
    g0 = oracle.true_nuisance(dgp)
    batch = draw_batch(rng.child(), dgp, mc.n)

    H = _empirical_hessian(oracle, theta_star, g0, batch)
    mu_hat = min_eig_sym(H)
    m_hat = max_eig_sym(H)

    # unbiasedness at a randomly displaced theta, against the analytic gradient
    theta = theta_star + rng.standard_normal(oracle.dim)
    scores = oracle.score_batch(theta, g0, batch)
    mean = scores.mean(axis=0)
    se = scores.std(axis=0) / np.sqrt(len(batch))
    gap = np.abs(mean - oracle.population_score(theta, dgp))
    return DiagReport(
        problem=oracle.problem_id,
        mu_hat=mu_hat,
        m_hat=m_hat,
        score_mean_abs=gap,
        score_se=se,
        unbiased=bool(np.all(gap <= 4.0 * se)),
        mc_n=mc.n,
        mc_seed=mc.seed,
    )


# ---------------------------------------------------------------------------
# Random smooth nuisances and samples (oracle cross-checks, certificates)


def _random_shape(rng: Rng, dw: int):
    """a0 + sum_k a_k cos(<v_k, p> + b_k); smooth with O(1) range."""
    a0 = float(rng.uniform(-0.5, 0.5))
    amps = rng.uniform(-0.7, 0.7, size=2)
    freqs = rng.normal(scale=0.6, size=(2, dw))
    phases = rng.uniform(0, 2 * np.pi, size=2)

    def shape(pts, a0=a0, amps=amps, freqs=freqs, phases=phases):
        return a0 + np.cos(pts @ freqs.T + phases) @ amps

    return shape


def random_smooth_nuisance(kind: str, dim: int, dw: int, seed: int) -> NuisanceFn:
    """A random interior nuisance candidate of the given kind.

    Propensity components stay well inside (0, 1) so perturbation-based
    derivative checks see smooth behavior.
    """
    rng = Rng(seed)
    pts_dim = dw if kind.startswith("plm") else dim
    parts = {}
    for name in KIND_PARTS[kind]:
        if name == "g_x":
            shapes = [_random_shape(rng, pts_dim) for _ in range(dim)]
            parts[name] = (lambda pts, shapes=tuple(shapes):
                           np.column_stack([s(pts) for s in shapes]))
        elif name == "g_prop":
            s = _random_shape(rng, pts_dim)
            parts[name] = (lambda pts, s=s:
                           0.5 + 0.35 * np.tanh(s(pts)))
        else:
            parts[name] = _random_shape(rng, pts_dim)
    return NuisanceFn(kind, parts)


def random_sample_batch(kind: str, rng: Rng, n: int, dim: int = 2) -> SampleBatch:
    """Synthetic observations with the field layout the problem expects."""
    if kind.startswith("plm"):
        return draw_batch(rng.child(), DgpConfig(lam=0.5), n)
    x = rng.uniform(-1.5, 1.5, size=(n, dim))
    treat = (rng.uniform(size=n) < 0.5).astype(int)
    y = rng.normal(size=n)
    if kind == "crr":
        y = np.abs(y)
    return SampleBatch(x=x, w=x.copy(), y=y, treat=treat)


def random_direction(kind: str, dgp: DgpConfig, seed: int,
                     norm_n: int = 100_000) -> NuisanceFn:
    """A random smooth direction normalized to unit nuisance norm."""
    rng = Rng(seed)
    w = draw_batch(rng.child(), dgp, norm_n).w
    if kind == "plm_nonorth":
        shape = _random_shape(rng, w.shape[1])
        scale = float(np.sqrt(np.mean(shape(w) ** 2)))
        return NuisanceFn(kind, {"g": lambda pts, s=shape, c=scale: s(pts) / c})
    if kind == "plm_orth":
        sy = _random_shape(rng, w.shape[1])
        sxs = [_random_shape(rng, w.shape[1]) for _ in range(dgp.d)]
        vy = np.mean(sy(w) ** 4) ** 0.25
        vx = np.mean(np.sum(np.column_stack([s(w) for s in sxs]) ** 2,
                            axis=1) ** 2) ** 0.25
        scale = max(vy, vx)
        g_y = lambda pts, s=sy, c=scale: s(pts) / c
        g_x = (lambda pts, shapes=tuple(sxs), c=scale:
               np.column_stack([s(pts) for s in shapes]) / c)
        return NuisanceFn(kind, {"g_y": g_y, "g_x": g_x})
    raise Unsupported(f"no direction construction for kind {kind!r}")


# ---------------------------------------------------------------------------
# Controlled perturbation directions


def _l2_unit(fn, points):
    scale = float(np.sqrt(np.mean(fn(points) ** 2)))
    return lambda pts, f=fn, s=scale: f(pts) / s


def _l4_unit(fn, points):
    scale = float(np.mean(fn(points) ** 4) ** 0.25)
    return lambda pts, f=fn, s=scale: f(pts) / s


def unit_direction(kind: str, dgp: DgpConfig, mc: MonteCarloCfg,
                   form: str = "default") -> NuisanceFn:
    """A fixed smooth bump of unit nuisance norm for the given kind.

    The normalizing constant is a Monte-Carlo moment on `mc.n` control
    draws with the recorded seed, so a perturbation g0 + r * h has
    nuisance error r up to that MC error. The default shapes are chosen
    to have a nonzero mean (scalar kind) and strongly correlated
    components (pair kind), so they exercise the worst-case bias scaling
    rather than a degenerate direction.
    """
    w = draw_batch(Rng(mc.seed), dgp, mc.n).w
    mean_field = lambda pts: pts.sum(axis=1) / pts.shape[1]

    if form == "default":
        shape = lambda pts: 1.0 + 0.5 * np.cos(mean_field(pts))
    elif form == "cos":
        shape = lambda pts: np.cos(mean_field(pts))
    elif form == "sin":
        shape = lambda pts: np.sin(mean_field(pts))
    elif form == "const":
        shape = lambda pts: np.ones(pts.shape[0])
    else:
        raise ValueError(f"unknown direction form {form!r}")

    if kind == "plm_nonorth":
        return NuisanceFn(kind, {"g": _l2_unit(shape, w)})
    if kind == "plm_orth":
        s4 = _l4_unit(shape, w)

        def g_x(pts, s=s4):
            out = np.zeros((pts.shape[0], len(dgp.theta0)))
            out[:, 0] = s(pts)
            return out

        return NuisanceFn(kind, {"g_y": s4, "g_x": g_x})
    raise Unsupported(f"no perturbation construction for kind {kind!r}")


__all__ = [
    "DiagReport", "GradOracle", "MonteCarloCfg", "NuisanceFn", "Sample",
    "SampleBatch", "PROBLEM_IDS", "batch_from_samples", "constant_nuisance",
    "diagnostics", "make_oracle", "nuisance_norm", "unit_direction",
    "random_direction", "random_sample_batch", "random_smooth_nuisance",
    "PlmOrthOracle", "PlmNonorthOracle", "CateUnresOracle", "CateResOracle",
    "CrrOracle",
]
