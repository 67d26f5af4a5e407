"""Treatment-effect problems: two conditional-average-treatment-effect
losses and the conditional-relative-risk loss. Observations carry a
binary treatment in `treat`; all nuisance components are functions of x.

Directional derivatives in the nuisance use central differencing in the
perturbation size (the closed forms are long and easy to get wrong);
scores are analytic.
"""

from __future__ import annotations

import numpy as np

from ..errors import DomainError, Unsupported
from .base import GradOracle, SampleBatch


def _require_treat(batch: SampleBatch):
    if batch.treat is None:
        raise DomainError("this problem needs a binary treatment field")
    return batch.treat.astype(float)


class CateUnresOracle(GradOracle):
    """Squared loss with unrestricted outcome/propensity nuisances.

    loss = 1/2 (y - g_out(x) - (treat - g_prop(x)) <theta, x>)^2.
    """

    kind = "cate_unres"

    def __init__(self, dim: int = 2):
        self.problem_id = "cate_unres"
        self.dim = dim

    def _resid(self, theta, g, batch):
        t = _require_treat(batch)
        v = t - g.part("g_prop", batch.x)
        r = batch.y - g.part("g_out", batch.x) - v * (batch.x @ theta)
        return r, v

    def loss_batch(self, theta, g, batch):
        self._check_kind(g)
        r, _ = self._resid(np.asarray(theta, dtype=float), g, batch)
        return 0.5 * r ** 2

    def score_batch(self, theta, g, batch):
        self._check_kind(g)
        r, v = self._resid(np.asarray(theta, dtype=float), g, batch)
        return -(r * v)[:, None] * batch.x

    def stream_kernel(self, g, batch):
        self._check_kind(g)
        t = _require_treat(batch)
        v = t - g.part("g_prop", batch.x)
        c = batch.y - g.part("g_out", batch.x)
        a = v[:, None] * batch.x

        def step(theta, i):
            ai = a[i]
            return -(c[i] - theta @ ai) * ai

        return step

    def true_nuisance(self, dgp):
        raise Unsupported("no analytic nuisance under the configured data model")

    def target(self, dgp):
        raise Unsupported("no closed-form target under the configured data model")


def _pseudo_outcome(g, batch):
    """Doubly robust label g1 - g0 + (treat - p) / (p (1 - p)) (y - g_treat)."""
    t = _require_treat(batch)
    p = g.part("g_prop", batch.x)
    g0 = g.part("g0", batch.x)
    g1 = g.part("g1", batch.x)
    g_at = np.where(t == 1.0, g1, g0)
    return g1 - g0 + (t - p) / (p * (1.0 - p)) * (batch.y - g_at)


class CateResOracle(GradOracle):
    """Squared loss on the doubly robust pseudo-outcome.

    loss = 1/2 (pseudo(g; z) - <theta, x>)^2 with the propensity clipped
    away from {0, 1} at evaluation time.
    """

    kind = "cate_res"

    def __init__(self, dim: int = 2):
        self.problem_id = "cate_res"
        self.dim = dim

    def loss_batch(self, theta, g, batch):
        self._check_kind(g)
        r = _pseudo_outcome(g, batch) - batch.x @ np.asarray(theta, dtype=float)
        return 0.5 * r ** 2

    def score_batch(self, theta, g, batch):
        self._check_kind(g)
        r = _pseudo_outcome(g, batch) - batch.x @ np.asarray(theta, dtype=float)
        return -r[:, None] * batch.x

    def stream_kernel(self, g, batch):
        self._check_kind(g)
        c = _pseudo_outcome(g, batch)
        x = batch.x

        def step(theta, i):
            xi = x[i]
            return -(c[i] - theta @ xi) * xi

        return step

    def true_nuisance(self, dgp):
        raise Unsupported("no analytic nuisance under the configured data model")

    def target(self, dgp):
        raise Unsupported("no closed-form target under the configured data model")


class CrrOracle(GradOracle):
    """Cross-entropy loss against doubly robust labels for a logit-linear
    relative-risk model. Outcomes must be non-negative.
    """

    kind = "crr"

    def __init__(self, dim: int = 2):
        self.problem_id = "crr"
        self.dim = dim

    def _labels(self, g, batch):
        if np.any(batch.y < 0):
            raise DomainError("relative-risk loss needs non-negative outcomes")
        t = _require_treat(batch)
        p = g.part("g_prop", batch.x)
        g0 = g.part("g0", batch.x)
        g1 = g.part("g1", batch.x)
        mu1 = g1 + (t == 1.0) / p * (batch.y - g1)
        mu0 = g0 + (t == 0.0) / (1.0 - p) * (batch.y - g0)
        return mu0, mu1

    @staticmethod
    def _predict(theta, x):
        p = 1.0 / (1.0 + np.exp(-(x @ theta)))
        if np.any(p == 0.0) or np.any(p == 1.0):
            raise DomainError("logit-linear prediction saturated to 0 or 1")
        return p

    def loss_batch(self, theta, g, batch):
        self._check_kind(g)
        mu0, mu1 = self._labels(g, batch)
        p = self._predict(np.asarray(theta, dtype=float), batch.x)
        return -(mu1 * np.log(p) + mu0 * np.log1p(-p))

    def score_batch(self, theta, g, batch):
        self._check_kind(g)
        mu0, mu1 = self._labels(g, batch)
        p = self._predict(np.asarray(theta, dtype=float), batch.x)
        return ((mu0 + mu1) * p - mu1)[:, None] * batch.x

    def stream_kernel(self, g, batch):
        self._check_kind(g)
        mu0, mu1 = self._labels(g, batch)
        tot = mu0 + mu1
        x = batch.x

        def step(theta, i):
            xi = x[i]
            p = 1.0 / (1.0 + np.exp(-(theta @ xi)))
            return (tot[i] * p - mu1[i]) * xi

        return step

    def true_nuisance(self, dgp):
        raise Unsupported("no analytic nuisance under the configured data model")

    def target(self, dgp):
        raise Unsupported("no closed-form target under the configured data model")
