"""Nuisance estimators: random Fourier features, exact ridge regression,
penalized logistic regression, and their streaming (minibatch gradient)
counterparts. All are scikit-learn style estimators so they compose with
pipelines and grid tools, but the solvers are implemented here because the
package depends on their exact objectives.
"""

from __future__ import annotations

import json

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.exceptions import NotFittedError

from .errors import MissingComponent, NoConvergence
from .linalg import cholesky
from .problems.base import KIND_PARTS, NuisanceFn
from .rng import Rng
from .validation import as_points, as_targets, require_rows

DEFAULT_REG_SCALE = 0.01
DEFAULT_STREAM_MINIBATCH = 32


def median_heuristic_gamma(W) -> float:
    """Bandwidth from median pairwise distance on (up to) 500 rows.

    Uses the leading rows so the value is a deterministic function of the
    data; recorded in run metadata wherever it is used.
    """
    W = require_rows(W)
    sub = W[: min(500, W.shape[0])]
    d2 = np.sum((sub[:, None, :] - sub[None, :, :]) ** 2, axis=-1)
    pos = d2[d2 > 0]
    if pos.size == 0:
        return 1.0
    med = float(np.sqrt(np.median(pos)))
    return 1.0 / (2.0 * med ** 2)


class RFFMap(BaseEstimator, TransformerMixin):
    """Random Fourier feature map for the kernel exp(-gamma ||w - w'||^2).

    Frequencies are N(0, 2 gamma I), phases Uniform[0, 2 pi); features are
    sqrt(2 / n_components) cos(w . freq + phase), so each entry is bounded
    by the scale. Frozen after fit.
    """

    def __init__(self, n_components=20, gamma="auto", seed=0):
        self.n_components = n_components
        self.gamma = gamma
        self.seed = seed

    def fit(self, W, y=None):
        if self.n_components < 1:
            raise ValueError("n_components must be at least 1")
        if self.gamma == "auto":
            gamma = median_heuristic_gamma(W)
        else:
            gamma = float(self.gamma)
            if gamma <= 0:
                raise ValueError("gamma must be positive")
        W = as_points(W)
        rng = Rng(self.seed)
        self.gamma_ = gamma
        self.frequencies_ = rng.normal(
            scale=np.sqrt(2.0 * gamma), size=(self.n_components, W.shape[1]))
        self.phases_ = rng.uniform(0.0, 2.0 * np.pi, size=self.n_components)
        self.scale_ = np.sqrt(2.0 / self.n_components)
        return self

    def transform(self, W):
        self._check_fitted()
        W = as_points(W)
        return self.scale_ * np.cos(W @ self.frequencies_.T + self.phases_)

    def _check_fitted(self):
        if not hasattr(self, "frequencies_"):
            raise NotFittedError("RFFMap is not fitted")


class RidgeOnFeatures(BaseEstimator, RegressorMixin):
    """Exact minimizer of mean squared error plus a ridge penalty on the
    feature weights, intercept unpenalized:

        mean_i (v_i - <beta, phi(w_i)> - b)^2 + (reg_scale / m) ||beta||^2

    solved by centered normal equations with a Cholesky factorization.
    """

    def __init__(self, rff: RFFMap, reg_scale=DEFAULT_REG_SCALE):
        self.rff = rff
        self.reg_scale = reg_scale

    def fit(self, W, v):
        W = require_rows(W)
        v = as_targets(v, W.shape[0])
        m = W.shape[0]
        reg = self.reg_scale / m
        if reg <= 0:
            raise ValueError("reg_scale must be positive")
        phi = self.rff.transform(W)
        mu_phi = phi.mean(axis=0)
        mu_v = v.mean()
        pc = phi - mu_phi
        a = pc.T @ pc / m + reg * np.eye(phi.shape[1])
        b = pc.T @ (v - mu_v) / m
        L = cholesky(a)  # reg > 0 keeps this positive definite
        z = np.linalg.solve(L, b)
        self.weights_ = np.linalg.solve(L.T, z)
        self.intercept_ = float(mu_v - mu_phi @ self.weights_)
        self.reg_ = reg
        return self

    def predict(self, W):
        if not hasattr(self, "weights_"):
            raise NotFittedError("RidgeOnFeatures is not fitted")
        return self.rff.transform(W) @ self.weights_ + self.intercept_


def _sigmoid(t):
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


class LogisticOnFeatures(BaseEstimator):
    """Penalized logistic regression on the feature map, Newton solver.

    Objective: mean negative log likelihood + (reg_scale / m) ||beta||^2
    with unpenalized intercept. Raises NoConvergence past the iteration
    cap; degenerate single-class data short-circuits to a constant-logit
    fit.
    """

    max_iter = 100
    grad_tol = 1e-8

    def __init__(self, rff: RFFMap, reg_scale=DEFAULT_REG_SCALE):
        self.rff = rff
        self.reg_scale = reg_scale

    def fit(self, W, labels):
        W = require_rows(W)
        y = as_targets(labels, W.shape[0])
        if not np.all((y == 0) | (y == 1)):
            raise ValueError("labels must be 0/1")
        m = W.shape[0]
        reg = self.reg_scale / m
        phi = self.rff.transform(W)
        k = phi.shape[1]
        self.reg_ = reg

        if y.min() == y.max():
            pbar = np.clip(y.mean(), 1.0 / (m + 1), m / (m + 1.0))
            self.weights_ = np.zeros(k)
            self.intercept_ = float(np.log(pbar / (1 - pbar)))
            return self

        z = np.hstack([phi, np.ones((m, 1))])
        beta = np.zeros(k + 1)
        pen = np.concatenate([np.full(k, reg), [0.0]])
        for _ in range(self.max_iter):
            p = _sigmoid(z @ beta)
            grad = z.T @ (p - y) / m + pen * beta
            if np.linalg.norm(grad) <= self.grad_tol:
                break
            wdiag = np.maximum(p * (1 - p), 1e-12)
            hess = (z * wdiag[:, None]).T @ z / m + np.diag(pen)
            beta = beta - np.linalg.solve(hess, grad)
        else:
            raise NoConvergence(
                f"logistic Newton solver: gradient norm {np.linalg.norm(grad):.2e} "
                f"after {self.max_iter} iterations")
        self.weights_ = beta[:k]
        self.intercept_ = float(beta[k])
        return self

    def decision_function(self, W):
        if not hasattr(self, "weights_"):
            raise NotFittedError("LogisticOnFeatures is not fitted")
        return self.rff.transform(W) @ self.weights_ + self.intercept_

    def predict_proba(self, W):
        return _sigmoid(self.decision_function(W))

    # lets logistic components stand in wherever a regression of a binary
    # variable on the controls is wanted (conditional-mean estimation)
    def predict(self, W):
        return self.predict_proba(W)


class StreamingRidge(BaseEstimator):
    """Minibatch gradient descent on the ridge objective above.

    State is (weights, intercept, iteration count); one `sgd_step` call
    consumes one minibatch and advances the count. Deterministic given
    the batch sequence. Default step is 0.05 / n_components, either held
    constant or decayed as step / sqrt(1 + t).
    """

    def __init__(self, rff: RFFMap, step=None, reg=1e-6,
                 minibatch=DEFAULT_STREAM_MINIBATCH, decay="none"):
        self.rff = rff
        self.step = step
        self.reg = reg
        self.minibatch = minibatch
        self.decay = decay

    def init_state(self, weights=None, intercept=0.0):
        k = self.rff.n_components
        self.weights_ = np.zeros(k) if weights is None else np.array(weights, dtype=float)
        self.intercept_ = float(intercept)
        self.iter_ = 0
        self.step_ = self.step if self.step is not None else 0.05 / k
        if self.step_ <= 0:
            raise ValueError("step must be positive")
        if self.decay not in ("none", "inv_sqrt"):
            raise ValueError(f"unknown decay {self.decay!r}")
        return self

    def warm_start_from(self, model: RidgeOnFeatures):
        return self.init_state(model.weights_, model.intercept_)

    def _current_step(self):
        if self.decay == "inv_sqrt":
            return self.step_ / np.sqrt(1.0 + self.iter_)
        return self.step_

    def sgd_step(self, W, v):
        if not hasattr(self, "weights_"):
            self.init_state()
        W = require_rows(W)
        v = as_targets(v, W.shape[0])
        m = W.shape[0]
        phi = self.rff.transform(W)
        resid = v - phi @ self.weights_ - self.intercept_
        grad_w = -(2.0 / m) * phi.T @ resid + 2.0 * self.reg * self.weights_
        grad_b = -(2.0 / m) * resid.sum()
        lr = self._current_step()
        self.weights_ = self.weights_ - lr * grad_w
        self.intercept_ = self.intercept_ - lr * grad_b
        self.iter_ += 1
        return self

    def objective(self, W, v):
        W = as_points(W)
        v = as_targets(v, W.shape[0])
        resid = v - self.predict(W)
        return float(np.mean(resid ** 2) + self.reg * self.weights_ @ self.weights_)

    def predict(self, W):
        if not hasattr(self, "weights_"):
            raise NotFittedError("StreamingRidge has no state; call init_state")
        return self.rff.transform(W) @ self.weights_ + self.intercept_


class StreamingLogistic(BaseEstimator):
    """Minibatch gradient descent on the penalized logistic objective."""

    def __init__(self, rff: RFFMap, step=None, reg=1e-6,
                 minibatch=DEFAULT_STREAM_MINIBATCH):
        self.rff = rff
        self.step = step
        self.reg = reg
        self.minibatch = minibatch

    def init_state(self, weights=None, intercept=0.0):
        k = self.rff.n_components
        self.weights_ = np.zeros(k) if weights is None else np.array(weights, dtype=float)
        self.intercept_ = float(intercept)
        self.iter_ = 0
        self.step_ = self.step if self.step is not None else 0.5 / k
        return self

    def warm_start_from(self, model: LogisticOnFeatures):
        return self.init_state(model.weights_, model.intercept_)

    def sgd_step(self, W, labels):
        if not hasattr(self, "weights_"):
            self.init_state()
        W = require_rows(W)
        y = as_targets(labels, W.shape[0])
        m = W.shape[0]
        phi = self.rff.transform(W)
        p = _sigmoid(phi @ self.weights_ + self.intercept_)
        grad_w = phi.T @ (p - y) / m + 2.0 * self.reg * self.weights_
        grad_b = float(np.sum(p - y) / m)
        self.weights_ = self.weights_ - self.step_ * grad_w
        self.intercept_ = self.intercept_ - self.step_ * grad_b
        self.iter_ += 1
        return self

    def predict_proba(self, W):
        if not hasattr(self, "weights_"):
            raise NotFittedError("StreamingLogistic has no state; call init_state")
        return _sigmoid(self.rff.transform(W) @ self.weights_ + self.intercept_)

    predict = predict_proba


# ---------------------------------------------------------------------------
# Wiring fitted models into problem nuisances


def _stack_predict(models):
    def g_x(points, models=tuple(models)):
        return np.column_stack([m.predict(points) for m in models])
    return g_x


def as_nuisance(models: dict, kind: str) -> NuisanceFn:
    """Bundle fitted component models into a NuisanceFn for `kind`.

    The pair kind takes {"g_y": model, "g_x": [per-coordinate models]};
    scalar kinds take one model per named part. Raises MissingComponent
    when a required part is absent.
    """
    if kind not in KIND_PARTS:
        raise MissingComponent(f"unknown kind {kind!r}")
    parts = {}
    for name in KIND_PARTS[kind]:
        if name not in models:
            raise MissingComponent(f"kind {kind!r} needs component {name!r}")
        comp = models[name]
        if name == "g_x":
            seq = list(comp) if isinstance(comp, (list, tuple)) else [comp]
            parts[name] = _stack_predict(seq)
        else:
            parts[name] = (lambda pts, m=comp: np.asarray(m.predict(pts), dtype=float))
    return NuisanceFn(kind, parts)


# ---------------------------------------------------------------------------
# Model serialization (one JSON document per fitted component)


def model_to_json(model) -> str:
    if isinstance(model, RidgeOnFeatures):
        kind = "ridge"
    elif isinstance(model, LogisticOnFeatures):
        kind = "logistic"
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    rff = model.rff
    doc = {
        "kind": kind,
        "gamma": rff.gamma_,
        "frequencies": rff.frequencies_.tolist(),
        "phases": rff.phases_.tolist(),
        "weights": model.weights_.tolist(),
        "intercept": model.intercept_,
        "reg": model.reg_,
    }
    return json.dumps(doc, sort_keys=True)


def model_from_json(text: str):
    doc = json.loads(text)
    freqs = np.asarray(doc["frequencies"], dtype=float)
    rff = RFFMap(n_components=freqs.shape[0], gamma=doc["gamma"])
    rff.gamma_ = float(doc["gamma"])
    rff.frequencies_ = freqs
    rff.phases_ = np.asarray(doc["phases"], dtype=float)
    rff.scale_ = np.sqrt(2.0 / freqs.shape[0])
    cls = {"ridge": RidgeOnFeatures, "logistic": LogisticOnFeatures}[doc["kind"]]
    model = cls(rff)
    model.weights_ = np.asarray(doc["weights"], dtype=float)
    model.intercept_ = float(doc["intercept"])
    model.reg_ = float(doc["reg"])
    return model
