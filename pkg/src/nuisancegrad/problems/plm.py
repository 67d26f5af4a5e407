"""Partially linear model problems.

Two losses over Z = (X, Y, W): the residual-on-residual form whose score
is insensitive to first-order nuisance error, and the plain squared loss
whose score is not. Both admit analytic scores, directional derivatives,
true nuisances, and targets under the Gaussian simulation model.
"""

from __future__ import annotations

import numpy as np

from ..errors import Unsupported
from ..simdata import DgpConfig, TabularSource
from .base import GradOracle, NuisanceFn


class PlmOrthOracle(GradOracle):
    """Squared loss on residualized outcome and input.

    loss(theta, g; z) = 1/2 (y - g_y(w) - <theta, x - g_x(w)>)^2 with
    nuisance pair g = (g_y, g_x).
    """

    kind = "plm_orth"

    def __init__(self, dim: int = 2):
        self.problem_id = "plm_orth"
        self.dim = dim

    def _resid(self, theta, g, batch):
        a = batch.x - g.part("g_x", batch.w)
        return batch.y - g.part("g_y", batch.w) - a @ theta, a

    def loss_batch(self, theta, g, batch):
        self._check_kind(g)
        r, _ = self._resid(np.asarray(theta, dtype=float), g, batch)
        return 0.5 * r ** 2

    def score_batch(self, theta, g, batch):
        self._check_kind(g)
        r, a = self._resid(np.asarray(theta, dtype=float), g, batch)
        return -r[:, None] * a

    def dirderiv_batch(self, theta, g, batch, h):
        self._check_kind(g)
        self._check_kind(h)
        theta = np.asarray(theta, dtype=float)
        r, _ = self._resid(theta, g, batch)
        hy = h.part("g_y", batch.w)
        hx = h.part("g_x", batch.w)
        return -r * (hy - hx @ theta)

    def stream_kernel(self, g, batch):
        self._check_kind(g)
        a = batch.x - g.part("g_x", batch.w)
        c = batch.y - g.part("g_y", batch.w)

        def step(theta, i):
            ai = a[i]
            return -(c[i] - theta @ ai) * ai

        return step

    def true_nuisance(self, dgp) -> NuisanceFn:
        if not isinstance(dgp, DgpConfig):
            raise Unsupported("no analytic nuisance pair for tabular sources")
        theta0 = np.asarray(dgp.theta0, dtype=float)
        g_x = lambda w: dgp.cond_mean_x(w)
        g_y = lambda w: dgp.cond_mean_x(w) @ theta0 + dgp.alpha0(w)
        return NuisanceFn(self.kind, {"g_y": g_y, "g_x": g_x})

    def target(self, dgp) -> np.ndarray:
        if isinstance(dgp, DgpConfig):
            return np.asarray(dgp.theta0, dtype=float)
        if isinstance(dgp, TabularSource):
            return np.array([dgp.theta0], dtype=float)
        raise Unsupported(f"no target for {type(dgp).__name__}")

    def population_hessian(self, dgp) -> np.ndarray:
        """E[(X - E[X|W])(X - E[X|W])^T] under the simulation model."""
        if not isinstance(dgp, DgpConfig):
            raise Unsupported("analytic Hessian needs the simulation model")
        resid_var = (1 + dgp.delta) - dgp.lam ** 2 / (1 + dgp.delta)
        return resid_var * np.eye(dgp.d)

    def population_score(self, theta, dgp) -> np.ndarray:
        """Analytic gradient of the population risk at (theta, g0)."""
        h = self.population_hessian(dgp)
        return h @ (np.asarray(theta, dtype=float) - np.asarray(dgp.theta0))


class PlmNonorthOracle(GradOracle):
    """Plain squared loss with a scalar control function.

    loss(theta, g; z) = 1/2 (y - g(w) - <theta, x>)^2. Sensitive to
    nuisance error at first order; the orthogonalized-oracle machinery
    exists to repair exactly this loss.
    """

    kind = "plm_nonorth"

    def __init__(self, dim: int = 2):
        self.problem_id = "plm_nonorth"
        self.dim = dim

    def loss_batch(self, theta, g, batch):
        self._check_kind(g)
        r = batch.y - g.part("g", batch.w) - batch.x @ np.asarray(theta, dtype=float)
        return 0.5 * r ** 2

    def score_batch(self, theta, g, batch):
        self._check_kind(g)
        r = batch.y - g.part("g", batch.w) - batch.x @ np.asarray(theta, dtype=float)
        return -r[:, None] * batch.x

    def dirderiv_batch(self, theta, g, batch, h):
        self._check_kind(g)
        self._check_kind(h)
        r = batch.y - g.part("g", batch.w) - batch.x @ np.asarray(theta, dtype=float)
        return -r * h.part("g", batch.w)

    def stream_kernel(self, g, batch):
        self._check_kind(g)
        c = batch.y - g.part("g", batch.w)
        x = batch.x

        def step(theta, i):
            xi = x[i]
            return -(c[i] - theta @ xi) * xi

        return step

    def true_nuisance(self, dgp) -> NuisanceFn:
        if isinstance(dgp, DgpConfig):
            return NuisanceFn(self.kind, {"g": dgp.alpha0})
        if isinstance(dgp, TabularSource):
            # samples carry standardized controls, matching the synthetic outcome
            return NuisanceFn(self.kind, {"g": dgp.alpha0})
        raise Unsupported(f"no true nuisance for {type(dgp).__name__}")

    def target(self, dgp) -> np.ndarray:
        if isinstance(dgp, DgpConfig):
            return np.asarray(dgp.theta0, dtype=float)
        if isinstance(dgp, TabularSource):
            return np.array([dgp.theta0], dtype=float)
        raise Unsupported(f"no target for {type(dgp).__name__}")

    def population_hessian(self, dgp) -> np.ndarray:
        """E[X X^T] under the simulation model."""
        if not isinstance(dgp, DgpConfig):
            raise Unsupported("analytic Hessian needs the simulation model")
        mu = np.asarray(dgp.mu_x, dtype=float)
        return (1 + dgp.delta) * np.eye(dgp.d) + np.outer(mu, mu)

    def population_score(self, theta, dgp) -> np.ndarray:
        h = self.population_hessian(dgp)
        return h @ (np.asarray(theta, dtype=float) - np.asarray(dgp.theta0))
