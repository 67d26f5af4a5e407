"""Run evaluation: excess risk under the true nuisance, log-log slope
fits, and the floor-subtracted steady-state estimators used by the
scaling-law studies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonPositive
from .problems.base import GradOracle, MonteCarloCfg, NuisanceFn, SampleBatch
from .rng import Rng
from .simdata import DgpConfig, draw_batch


def excess_risk(oracle: GradOracle, theta, g0: NuisanceFn,
                eval_batch: SampleBatch, theta_star) -> float:
    """Mean loss gap L(theta, g0) - L(theta_star, g0) on a shared
    evaluation batch. Using the same draws for both terms (common random
    numbers) makes small gaps measurable."""
    lt = oracle.loss_batch(theta, g0, eval_batch)
    ls = oracle.loss_batch(theta_star, g0, eval_batch)
    return float(np.mean(lt - ls))


def excess_risk_curve(oracle, thetas, g0, eval_batch, theta_star) -> np.ndarray:
    return np.array([excess_risk(oracle, th, g0, eval_batch, theta_star)
                     for th in np.atleast_2d(thetas)])


def make_eval_batch(dgp: DgpConfig, mc: MonteCarloCfg) -> SampleBatch:
    return draw_batch(Rng(mc.seed), dgp, mc.n)


@dataclass
class SlopeFit:
    slope: float
    intercept: float
    r2: float


def slope_fit(pairs) -> SlopeFit:
    """Least-squares line through (log scale, log error) points."""
    pairs = [(float(a), float(b)) for a, b in pairs]
    if len(pairs) < 3:
        raise NonPositive("need at least 3 (scale, error) pairs")
    xs = np.array([p[0] for p in pairs])
    ys = np.array([p[1] for p in pairs])
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise NonPositive("scales and errors must be strictly positive")
    lx, ly = np.log(xs), np.log(ys)
    A = np.vstack([lx, np.ones_like(lx)]).T
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    fitted = A @ coef
    ss_res = float(np.sum((ly - fitted) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return SlopeFit(slope=float(coef[0]), intercept=float(coef[1]), r2=r2)


def nonneg_two_term_fit(r_vals, rho_vals, squared_bias):
    """Nonnegative least squares of squared bias on (r^4, r^2 rho^2).

    Returns (c1, c2, relative residual). Both regressor branches (zero
    and proportional operator error) should be included so the two terms
    are identified.
    """
    from scipy.optimize import nnls

    r = np.asarray(r_vals, dtype=float)
    rho = np.asarray(rho_vals, dtype=float)
    y = np.asarray(squared_bias, dtype=float)
    X = np.vstack([r ** 4, r ** 2 * rho ** 2]).T
    coef, _ = nnls(X, y)
    resid = y - X @ coef
    rel = float(np.linalg.norm(resid) / np.linalg.norm(y))
    return float(coef[0]), float(coef[1]), rel
