"""Iteration engines: constant-step stochastic gradient descent with a
plugged-in nuisance, its orthogonalized variant, the running-average
variant, and the interleaved driver that alternates streaming nuisance
updates with target steps.

A single run is strictly sequential; all randomness lives in the sample
streams, so identical (config, streams) give bitwise-identical output.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import NonFiniteIterate, StreamExhausted
from .problems.base import GradOracle, NuisanceFn

CHUNK = 4096
GUARD_CHECK_EVERY = 32


@dataclass
class OptConfig:
    """Constant learning rate, iteration budget, and recording cadence."""

    eta: float
    n_iters: int
    record_every: int = 100
    seed: int = 0
    keep_path: bool = False
    divergence_guard: float = 1e8

    def __post_init__(self):
        if self.eta < 0:
            raise ValueError("eta must be nonnegative")
        if self.record_every < 1:
            raise ValueError("record_every must be at least 1")


@dataclass
class Trajectory:
    """Recorded iterates and metrics of one optimization run."""

    iters: np.ndarray              # strictly increasing, starts at 0
    thetas: np.ndarray             # (k, d) snapshots at `iters`
    theta_final: np.ndarray
    rel_err: Optional[np.ndarray] = None
    excess_risk: Optional[np.ndarray] = None
    path: Optional[np.ndarray] = None   # (n_iters + 1, d) when kept

    def tail_mean(self, frac: float = 0.25) -> np.ndarray:
        """Average iterate over the final `frac` of the full path."""
        if self.path is None:
            raise ValueError("run with keep_path=True to use tail statistics")
        lo = int((1.0 - frac) * (self.path.shape[0] - 1))
        return self.path[lo:].mean(axis=0)


@dataclass
class InterleaveSchedule:
    """Alternation plan: nuisance_block streaming-fit steps, then
    target_block optimizer steps, for `rounds` rounds."""

    target_block: int = 2000
    nuisance_block: int = 2000
    rounds: int = 10

    def __post_init__(self):
        if self.target_block < 1 or self.nuisance_block < 0:
            raise ValueError("blocks must be positive (nuisance block may be 0)")


def _finalize(iters, thetas, path, theta, theta_star):
    iters = np.asarray(iters, dtype=int)
    thetas = np.asarray(thetas, dtype=float)
    rel = None
    if theta_star is not None:
        star = np.asarray(theta_star, dtype=float)
        denom = np.linalg.norm(star)
        rel = np.linalg.norm(thetas - star, axis=1) / denom
    return Trajectory(
        iters=iters,
        thetas=thetas,
        theta_final=theta.copy(),
        rel_err=rel,
        path=None if path is None else np.asarray(path),
    )


def _drive(oracle, ghat, theta0, cfg: OptConfig, stream, theta_star,
           average: bool):
    theta = np.array(theta0, dtype=float)
    if average:
        mean = theta.copy()
    track = mean if average else theta
    iters = [0]
    thetas = [track.copy()]
    path = [track.copy()] if cfg.keep_path else None
    guard_sq = cfg.divergence_guard ** 2

    done = 0
    while done < cfg.n_iters:
        want = min(CHUNK, cfg.n_iters - done)
        batch = stream.next_batch(want)
        got = len(batch)
        if got == 0:
            raise StreamExhausted(f"stream ended at iteration {done}")
        kernel = oracle.stream_kernel(ghat, batch)
        for i in range(got):
            theta = theta - cfg.eta * kernel(theta, i)
            done += 1
            if average:
                mean = mean + (theta - mean) / (done + 1)
                track = mean
            else:
                track = theta
            if done % GUARD_CHECK_EVERY == 0 or done == cfg.n_iters:
                mag = theta @ theta
                if not np.isfinite(mag) or mag > guard_sq:
                    raise NonFiniteIterate(
                        f"iterate diverged at iteration {done}",
                        iteration=done, theta=theta.copy())
            if path is not None:
                path.append(track.copy())
            if done % cfg.record_every == 0 or done == cfg.n_iters:
                iters.append(done)
                thetas.append(track.copy())

    return _finalize(iters, thetas, path, track, theta_star)


def sgd_run(oracle: GradOracle, ghat: NuisanceFn, theta0, cfg: OptConfig,
            stream, theta_star=None) -> Trajectory:
    """Plain constant-step run: theta <- theta - eta * S(theta, ghat; Z)."""
    return _drive(oracle, ghat, theta0, cfg, stream, theta_star, average=False)


def osgd_run(no_oracle, ghat: NuisanceFn, theta0, cfg: OptConfig,
             stream, theta_star=None) -> Trajectory:
    """Run driven by the orthogonalized oracle; with a zero operator this
    is bitwise identical to `sgd_run` on the base problem."""
    return _drive(no_oracle, ghat, theta0, cfg, stream, theta_star, average=False)


def averaged_sgd_run(oracle: GradOracle, ghat: NuisanceFn, theta0,
                     cfg: OptConfig, stream, theta_star=None) -> Trajectory:
    """Maintains the running average of all iterates (initial point
    included) and reports metrics on the average."""
    return _drive(oracle, ghat, theta0, cfg, stream, theta_star, average=True)


def interleaved_run(oracle: GradOracle, stream_target, stream_nuisance,
                    sched: InterleaveSchedule, updater, cfg: OptConfig,
                    theta0=None, theta_star=None,
                    orthogonalize: bool = False) -> Trajectory:
    """Alternate streaming nuisance updates with target steps.

    `updater` consumes only the nuisance stream: `update(batch)` performs
    one streaming-fit step on a minibatch of `updater.minibatch` samples,
    and `current()` returns the (nuisance, operator) pair to plug in for
    the next target block. The target iterate carries across rounds.
    """
    from .ortho import NoOracle  # local import to avoid a cycle

    theta = np.zeros(oracle.dim) if theta0 is None else np.array(theta0, dtype=float)
    iters = [0]
    thetas = [theta.copy()]
    path = [theta.copy()] if cfg.keep_path else None
    guard_sq = cfg.divergence_guard ** 2
    done = 0
    total = sched.target_block * sched.rounds

    for _ in range(sched.rounds):
        for _ in range(sched.nuisance_block):
            nb = stream_nuisance.next_batch(updater.minibatch)
            if len(nb) < updater.minibatch:
                raise StreamExhausted("nuisance stream ended mid-block")
            updater.update(nb)
        ghat, gamma = updater.current()
        active = NoOracle(oracle, gamma) if orthogonalize else oracle

        remaining = sched.target_block
        while remaining > 0:
            want = min(CHUNK, remaining)
            batch = stream_target.next_batch(want)
            got = len(batch)
            if got == 0:
                raise StreamExhausted(f"target stream ended at iteration {done}")
            kernel = active.stream_kernel(ghat, batch)
            for i in range(got):
                theta = theta - cfg.eta * kernel(theta, i)
                done += 1
                if done % GUARD_CHECK_EVERY == 0 or done == total:
                    mag = theta @ theta
                    if not np.isfinite(mag) or mag > guard_sq:
                        raise NonFiniteIterate(
                            f"iterate diverged at iteration {done}",
                            iteration=done, theta=theta.copy())
                if path is not None:
                    path.append(theta.copy())
                if done % cfg.record_every == 0 or done == total:
                    iters.append(done)
                    thetas.append(theta.copy())
            remaining -= got

    return _finalize(iters, thetas, path, theta, theta_star)
