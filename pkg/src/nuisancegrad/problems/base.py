"""Shared data structures for loss oracles.

A problem is described by a `GradOracle`: the instance loss, its analytic
gradient in the target parameter (the score), and the directional
derivative of the loss in the nuisance. Nuisance functions are bundles of
named vectorized callables, one bundle layout per problem kind.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ..errors import KindMismatch

# component layout per problem kind
KIND_PARTS = {
    "plm_orth": ("g_y", "g_x"),
    "plm_nonorth": ("g",),
    "cate_unres": ("g_out", "g_prop"),
    "cate_res": ("g0", "g1", "g_prop"),
    "crr": ("g0", "g1", "g_prop"),
}

# kinds whose propensity component must stay inside (0, 1)
CLIPPED_PROP_KINDS = ("cate_res", "crr")

DEFAULT_PROP_CLIP = 0.05


@dataclass
class Sample:
    """One observation. `x` is the model input, `w` the control vector,
    `treat` the binary treatment (treatment-effect problems only), `u`
    the auxiliary proxy outcome, `eps` the stored structural noise."""

    x: np.ndarray
    w: np.ndarray
    y: float
    treat: Optional[int] = None
    u: Optional[float] = None
    eps: Optional[float] = None


@dataclass
class SampleBatch:
    """Column-oriented batch of observations; rows align across fields."""

    x: np.ndarray                     # (n, d)
    w: np.ndarray                     # (n, d_w)
    y: np.ndarray                     # (n,)
    treat: Optional[np.ndarray] = None
    u: Optional[np.ndarray] = None
    eps: Optional[np.ndarray] = None

    def __len__(self):
        return self.x.shape[0]

    def row(self, i: int) -> Sample:
        return Sample(
            x=self.x[i],
            w=self.w[i],
            y=float(self.y[i]),
            treat=None if self.treat is None else int(self.treat[i]),
            u=None if self.u is None else float(self.u[i]),
            eps=None if self.eps is None else float(self.eps[i]),
        )

    def slice(self, lo: int, hi: int) -> "SampleBatch":
        pick = lambda a: None if a is None else a[lo:hi]
        return SampleBatch(self.x[lo:hi], self.w[lo:hi], self.y[lo:hi],
                           pick(self.treat), pick(self.u), pick(self.eps))

    def subset(self, idx) -> "SampleBatch":
        pick = lambda a: None if a is None else a[idx]
        return SampleBatch(self.x[idx], self.w[idx], self.y[idx],
                           pick(self.treat), pick(self.u), pick(self.eps))


def batch_from_samples(samples) -> SampleBatch:
    xs = np.stack([s.x for s in samples])
    ws = np.stack([s.w for s in samples])
    ys = np.array([s.y for s in samples], dtype=float)
    treat = None
    if samples and samples[0].treat is not None:
        treat = np.array([s.treat for s in samples], dtype=int)
    u = None
    if samples and samples[0].u is not None:
        u = np.array([s.u for s in samples], dtype=float)
    return SampleBatch(xs, ws, ys, treat=treat, u=u)


def _single(batch_or_sample) -> SampleBatch:
    if isinstance(batch_or_sample, SampleBatch):
        return batch_or_sample
    return batch_from_samples([batch_or_sample])


class NuisanceFn:
    """A nuisance candidate: named vectorized components for one kind.

    Each part maps an (n, dim) array of evaluation points to an (n,) array
    (or (n, d) for the vector-valued `g_x` part). For kinds with a
    restricted propensity the `g_prop` output is clipped into
    [clip, 1 - clip] at evaluation time.
    """

    def __init__(self, kind: str, parts: dict, prop_clip: float = DEFAULT_PROP_CLIP):
        if kind not in KIND_PARTS:
            raise KindMismatch(f"unknown nuisance kind {kind!r}")
        missing = [p for p in KIND_PARTS[kind] if p not in parts]
        if missing:
            raise KindMismatch(f"kind {kind!r} missing parts {missing}")
        self.kind = kind
        self.parts = dict(parts)
        self.prop_clip = float(prop_clip)

    def part(self, name: str, points: np.ndarray) -> np.ndarray:
        vals = np.asarray(self.parts[name](points), dtype=float)
        if name == "g_prop" and self.kind in CLIPPED_PROP_KINDS:
            c = self.prop_clip
            vals = np.clip(vals, c, 1.0 - c)
        return vals

    def axpy(self, t: float, other: "NuisanceFn") -> "NuisanceFn":
        """Pointwise self + t * other, used for directional perturbations."""
        if other.kind != self.kind:
            raise KindMismatch(f"cannot combine kinds {self.kind!r} and {other.kind!r}")
        new_parts = {}
        for name in KIND_PARTS[self.kind]:
            f, g = self.parts[name], other.parts[name]
            new_parts[name] = (lambda pts, f=f, g=g: np.asarray(f(pts), dtype=float)
                               + t * np.asarray(g(pts), dtype=float))
        return NuisanceFn(self.kind, new_parts, prop_clip=self.prop_clip)


def constant_nuisance(kind: str, dim: int = 2, value: float = 0.0) -> NuisanceFn:
    """All-constant nuisance of the given kind (handy zero element)."""
    scalar = lambda pts: np.full(pts.shape[0], value)
    vector = lambda pts: np.full((pts.shape[0], dim), value)
    parts = {}
    for name in KIND_PARTS[kind]:
        parts[name] = vector if name == "g_x" else scalar
    return NuisanceFn(kind, parts)


@dataclass
class MonteCarloCfg:
    """Size and seed of a Monte-Carlo estimate; recorded in reports."""

    n: int = 100_000
    seed: int = 0


@dataclass
class DiagReport:
    """Empirical curvature and unbiasedness diagnostics for one problem."""

    problem: str
    mu_hat: float                  # smallest eigenvalue of the Hessian at the optimum
    m_hat: float                   # largest eigenvalue
    score_mean_abs: np.ndarray     # |MC mean score - analytic gradient| per coordinate
    score_se: np.ndarray           # MC standard errors per coordinate
    unbiased: bool                 # every coordinate within 4 standard errors
    mc_n: int
    mc_seed: int


class GradOracle:
    """Loss / score / directional-derivative bundle for one problem.

    Subclasses implement the batch forms; the single-sample entry points
    below are thin wrappers. `theta` is always a length-d vector.
    """

    problem_id: str = ""
    kind: str = ""
    dim: int = 0

    # -- batch interface (subclasses override) ---------------------------

    def loss_batch(self, theta, g: NuisanceFn, batch: SampleBatch) -> np.ndarray:
        raise NotImplementedError

    def score_batch(self, theta, g: NuisanceFn, batch: SampleBatch) -> np.ndarray:
        raise NotImplementedError

    def dirderiv_batch(self, theta, g: NuisanceFn, batch: SampleBatch,
                       h: NuisanceFn) -> np.ndarray:
        """D_g loss in direction h, one value per sample.

        Default: central difference in the perturbation size t. Kinds with
        printed closed forms override with the analytic expression.
        """
        self._check_kind(g)
        self._check_kind(h)
        t = 1e-5
        up = self.loss_batch(theta, g.axpy(t, h), batch)
        dn = self.loss_batch(theta, g.axpy(-t, h), batch)
        return (up - dn) / (2.0 * t)

    def stream_kernel(self, g: NuisanceFn, batch: SampleBatch) -> Callable:
        """Per-sample gradient evaluator with nuisance values precomputed.

        Returns step(theta, i) -> gradient vector. The nuisance is frozen
        over the batch, so its components are evaluated once up front;
        this is what keeps the optimizer inner loop cheap.
        """
        raise NotImplementedError

    # -- single-sample wrappers ------------------------------------------

    def loss(self, theta, g: NuisanceFn, z: Sample) -> float:
        return float(self.loss_batch(theta, g, _single(z))[0])

    def score(self, theta, g: NuisanceFn, z: Sample) -> np.ndarray:
        return self.score_batch(theta, g, _single(z))[0]

    def dirderiv_g(self, theta, g: NuisanceFn, z: Sample, h: NuisanceFn) -> float:
        return float(self.dirderiv_batch(theta, g, _single(z), h)[0])

    # -- helpers -----------------------------------------------------------

    def _check_kind(self, g: NuisanceFn):
        if g.kind != self.kind:
            raise KindMismatch(
                f"problem {self.problem_id!r} expects nuisance kind "
                f"{self.kind!r}, got {g.kind!r}")

    def dirderiv_score_batch(self, theta, g: NuisanceFn, batch: SampleBatch,
                             h: NuisanceFn, t: float = 1e-4) -> np.ndarray:
        """D_g of the score in direction h, per sample, by central
        differences in t. Used by the orthogonality certificates."""
        self._check_kind(g)
        self._check_kind(h)
        up = self.score_batch(theta, g.axpy(t, h), batch)
        dn = self.score_batch(theta, g.axpy(-t, h), batch)
        return (up - dn) / (2.0 * t)


def norm_points(kind: str) -> str:
    """Which field of a sample the nuisance of this kind is evaluated on."""
    return "w" if kind.startswith("plm") else "x"


def nuisance_norm_from_points(kind: str, g1: NuisanceFn, g2: NuisanceFn,
                              points: np.ndarray) -> tuple[float, float]:
    """Monte-Carlo distance between two nuisances of the same kind.

    The metric follows the problem: a root-mean-square distance for the
    scalar partially linear nuisance, and the max of fourth-moment norms
    over components for the multi-part kinds. Returns (estimate, MC
    standard error of the estimate).
    """
    if g1.kind != g2.kind:
        raise KindMismatch(f"kinds differ: {g1.kind!r} vs {g2.kind!r}")
    kind = g1.kind
    n = points.shape[0]

    def moment(vals, p):
        # E[vals^p]^(1/p) with a delta-method standard error
        mp = np.mean(vals ** p)
        if mp <= 0:
            return 0.0, 0.0
        se_mp = np.std(vals ** p) / np.sqrt(n)
        est = mp ** (1.0 / p)
        se = est / p * se_mp / mp
        return est, se

    if kind == "plm_nonorth":
        diff = g1.part("g", points) - g2.part("g", points)
        return moment(np.abs(diff), 2)

    if kind == "plm_orth":
        dy = np.abs(g1.part("g_y", points) - g2.part("g_y", points))
        dx = np.linalg.norm(g1.part("g_x", points) - g2.part("g_x", points), axis=1)
        ey, sy = moment(dy, 4)
        ex, sx = moment(dx, 4)
        return (ey, sy) if ey >= ex else (ex, sx)

    # treatment-effect kinds: max of fourth-moment norms over scalar parts
    ests = []
    for name in KIND_PARTS[kind]:
        d = np.abs(g1.part(name, points) - g2.part(name, points))
        ests.append(moment(d, 4))
    return max(ests, key=lambda p: p[0])
