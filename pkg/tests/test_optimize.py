import numpy as np
import pytest

from nuisancegrad.errors import NonFiniteIterate, StreamExhausted
from nuisancegrad.nuisance import RFFMap, RidgeOnFeatures, StreamingRidge
from nuisancegrad.optimize import (InterleaveSchedule, OptConfig,
                                   averaged_sgd_run, interleaved_run,
                                   osgd_run, sgd_run)
from nuisancegrad.ortho import NoOracle, plm_true_operator, zero_operator
from nuisancegrad.problems import (MonteCarloCfg, NuisanceFn, make_oracle,
                                   unit_direction)
from nuisancegrad.problems.base import SampleBatch
from nuisancegrad.rng import Rng
from nuisancegrad.simdata import DgpConfig, FixedStream, SampleStream, draw_batch

DGP = DgpConfig(lam=0.5)


class QuadraticOracle:
    """1-D deterministic test problem: loss(theta) = (theta - 1)^2 / 2."""

    problem_id = "quadratic"
    kind = "plm_nonorth"
    dim = 1

    def stream_kernel(self, g, batch):
        return lambda theta, i: theta - 1.0


class DummyStream:
    def next_batch(self, k):
        zeros = np.zeros((k, 1))
        return SampleBatch(x=zeros, w=zeros, y=np.zeros(k))


def _g0():
    return make_oracle("plm_nonorth").true_nuisance(DGP)


def test_zero_learning_rate_keeps_initial_point():
    oracle = make_oracle("plm_nonorth")
    cfg = OptConfig(eta=0.0, n_iters=500, record_every=100)
    traj = sgd_run(oracle, _g0(), np.array([3.0, -2.0]), cfg,
                   SampleStream(Rng(0), DGP), theta_star=[-0.5, 1.0])
    assert np.all(traj.thetas == [3.0, -2.0])


def test_quadratic_contracts_geometrically():
    eta = 0.1
    cfg = OptConfig(eta=eta, n_iters=50, record_every=1, keep_path=True)
    traj = sgd_run(QuadraticOracle(), None, np.array([0.0]), cfg, DummyStream())
    gaps = np.abs(traj.path[:, 0] - 1.0)
    expected = (1 - eta) ** np.arange(51)
    assert np.allclose(gaps, expected, rtol=1e-12)


def test_sgd_reaches_small_error_with_true_nuisance():
    # steady-state error read off the tail-averaged iterate (the noise
    # ball at this step size is wider than the bias we are checking for)
    oracle = make_oracle("plm_nonorth")
    theta_star = oracle.target(DGP)
    finals = []
    for seed in range(20):
        cfg = OptConfig(eta=0.01, n_iters=20_000, record_every=5_000,
                        keep_path=True)
        traj = sgd_run(oracle, _g0(), np.zeros(2), cfg,
                       SampleStream(Rng(seed), DGP), theta_star)
        steady = traj.tail_mean(0.1)
        finals.append(np.linalg.norm(steady - theta_star)
                      / np.linalg.norm(theta_star))
    assert np.median(finals) < 0.05


def test_osgd_zero_operator_bitwise_equals_sgd():
    oracle = make_oracle("plm_nonorth")
    cfg = OptConfig(eta=1e-3, n_iters=2_000, record_every=200)
    a = sgd_run(oracle, _g0(), np.zeros(2), cfg, SampleStream(Rng(5), DGP))
    no = NoOracle(oracle, zero_operator(2))
    b = osgd_run(no, _g0(), np.zeros(2), cfg, SampleStream(Rng(5), DGP))
    assert np.array_equal(a.thetas, b.thetas)


def test_osgd_true_operator_beats_sgd_under_biased_nuisance():
    oracle = make_oracle("plm_nonorth")
    theta_star = oracle.target(DGP)
    h = unit_direction("plm_nonorth", DGP, MonteCarloCfg(n=100_000, seed=1))
    ghat = _g0().axpy(0.3, h)
    no = NoOracle(oracle, plm_true_operator(DGP))
    sgd_err, osgd_err = [], []
    for seed in range(20):
        cfg = OptConfig(eta=1e-3, n_iters=10_000, record_every=2_500)
        t1 = sgd_run(oracle, ghat, np.zeros(2), cfg,
                     SampleStream(Rng(seed), DGP), theta_star)
        t2 = osgd_run(no, ghat, np.zeros(2), cfg,
                      SampleStream(Rng(seed), DGP), theta_star)
        sgd_err.append(t1.rel_err[-1])
        osgd_err.append(t2.rel_err[-1])
    assert np.median(osgd_err) < np.median(sgd_err)


def test_averaged_constant_updates():
    cfg = OptConfig(eta=0.0, n_iters=100, record_every=10)
    oracle = make_oracle("plm_nonorth")
    traj = averaged_sgd_run(oracle, _g0(), np.array([2.0, 2.0]), cfg,
                            SampleStream(Rng(1), DGP))
    assert np.all(traj.thetas == [2.0, 2.0])


def test_averaged_equals_arithmetic_mean_of_iterates():
    oracle = make_oracle("plm_nonorth")
    cfg = OptConfig(eta=5e-3, n_iters=500, record_every=500, keep_path=True)
    plain = sgd_run(oracle, _g0(), np.zeros(2), cfg, SampleStream(Rng(2), DGP))
    avg = averaged_sgd_run(oracle, _g0(), np.zeros(2), cfg,
                           SampleStream(Rng(2), DGP))
    mean_of_path = plain.path.mean(axis=0)
    assert np.max(np.abs(avg.theta_final - mean_of_path)) < 1e-12


def test_contraction_phase_is_log_linear():
    # before the noise floor, log error falls off linearly in the
    # iteration count; fit the pre-floor segment of a far-started run
    oracle = make_oracle("plm_nonorth")
    theta_star = oracle.target(DGP)
    cfg = OptConfig(eta=2e-3, n_iters=4_000, record_every=50, keep_path=True)
    traj = sgd_run(oracle, _g0(), np.array([10.0, 10.0]), cfg,
                   SampleStream(Rng(11), DGP), theta_star)
    floor = np.median(traj.rel_err[-10:])
    pre = traj.rel_err > 2 * floor
    xs = traj.iters[pre]
    ys = np.log(traj.rel_err[pre])
    assert len(xs) >= 5
    A = np.vstack([xs, np.ones_like(xs)]).T
    coef, *_ = np.linalg.lstsq(A, ys, rcond=None)
    fitted = A @ coef
    r2 = 1 - np.sum((ys - fitted) ** 2) / np.sum((ys - ys.mean()) ** 2)
    assert coef[0] < 0
    assert r2 > 0.95


def test_divergence_guard_raises():
    oracle = make_oracle("plm_nonorth")
    cfg = OptConfig(eta=5.0, n_iters=10_000, record_every=1_000)
    with pytest.raises(NonFiniteIterate) as err:
        sgd_run(oracle, _g0(), np.zeros(2), cfg, SampleStream(Rng(3), DGP))
    assert err.value.iteration is not None


def test_stream_exhaustion_raises():
    oracle = make_oracle("plm_nonorth")
    cfg = OptConfig(eta=1e-3, n_iters=100, record_every=10)
    short = SampleStream(Rng(4), DGP, count=50)
    with pytest.raises(StreamExhausted):
        sgd_run(oracle, _g0(), np.zeros(2), cfg, short)


def test_runs_are_deterministic():
    oracle = make_oracle("plm_nonorth")
    outs = []
    for _ in range(2):
        cfg = OptConfig(eta=1e-3, n_iters=3_000, record_every=300)
        traj = sgd_run(oracle, _g0(), np.zeros(2), cfg,
                       SampleStream(Rng(6), DGP), theta_star=[-0.5, 1.0])
        outs.append(traj)
    assert np.array_equal(outs[0].thetas, outs[1].thetas)
    assert np.array_equal(outs[0].rel_err, outs[1].rel_err)


# ---------------------------------------------------------------------------
# Interleaving


class FrozenUpdater:
    """Updater whose streaming steps are no-ops; mirrors a fixed nuisance."""

    minibatch = 1

    def __init__(self, g):
        self.g = g

    def update(self, batch):
        pass

    def current(self):
        return self.g, None


class RidgeUpdater:
    minibatch = 8

    def __init__(self, seed):
        warm = draw_batch(Rng(seed), DGP, 200)
        self.feat = RFFMap(seed=seed).fit(warm.w)
        self.sr = StreamingRidge(self.feat)
        self.sr.warm_start_from(RidgeOnFeatures(self.feat).fit(warm.w, warm.u))

    def update(self, batch):
        self.sr.sgd_step(batch.w, batch.u)

    def current(self):
        g = NuisanceFn("plm_nonorth",
                       {"g": lambda pts, m=self.sr: m.predict(pts)})
        return g, None


def test_interleaved_noop_blocks_match_plain_run():
    # a materialized stream makes the two consumption patterns see the
    # same samples, so the degenerate schedule must match bitwise
    oracle = make_oracle("plm_nonorth")
    g = _g0()
    data = draw_batch(Rng(7), DGP, 2_000)
    sched = InterleaveSchedule(target_block=500, nuisance_block=0, rounds=4)
    cfg = OptConfig(eta=1e-3, n_iters=2_000, record_every=500)
    a = interleaved_run(oracle, FixedStream(data), SampleStream(Rng(8), DGP),
                        sched, FrozenUpdater(g), cfg, theta_star=[-0.5, 1.0])
    b = sgd_run(oracle, g, np.zeros(2), cfg, FixedStream(data),
                theta_star=[-0.5, 1.0])
    assert np.array_equal(a.thetas, b.thetas)


def test_interleaved_updates_help_over_frozen_start():
    oracle = make_oracle("plm_nonorth")
    theta_star = oracle.target(DGP)
    frozen_errs, live_errs = [], []
    for seed in range(6):
        sched_live = InterleaveSchedule(target_block=1_000, nuisance_block=250,
                                        rounds=6)
        sched_frozen = InterleaveSchedule(target_block=1_000, nuisance_block=0,
                                          rounds=6)
        cfg = OptConfig(eta=1e-3, n_iters=6_000, record_every=1_000)
        live = interleaved_run(oracle, SampleStream(Rng(seed + 100), DGP),
                               SampleStream(Rng(seed + 200), DGP), sched_live,
                               RidgeUpdater(seed), cfg, theta_star=theta_star)
        froz = interleaved_run(oracle, SampleStream(Rng(seed + 100), DGP),
                               SampleStream(Rng(seed + 200), DGP), sched_frozen,
                               RidgeUpdater(seed), cfg, theta_star=theta_star)
        live_errs.append(live.rel_err[-1])
        frozen_errs.append(froz.rel_err[-1])
    assert np.median(live_errs) < np.median(frozen_errs)


def test_interleaved_exhausts_nuisance_stream():
    oracle = make_oracle("plm_nonorth")
    sched = InterleaveSchedule(target_block=100, nuisance_block=50, rounds=2)
    cfg = OptConfig(eta=1e-3, n_iters=200, record_every=100)
    short = SampleStream(Rng(9), DGP, count=30)
    with pytest.raises(StreamExhausted):
        interleaved_run(oracle, SampleStream(Rng(10), DGP), short, sched,
                        RidgeUpdater(0), cfg)
