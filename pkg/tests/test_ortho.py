import numpy as np
import pytest

from nuisancegrad.errors import KindMismatch, Unsupported
from nuisancegrad.nuisance import RFFMap
from nuisancegrad.ortho import (NoOracle, estimate_operator, frob_error,
                                operator_from_json, operator_to_json,
                                orthogonality_check, perturbed_operator,
                                plm_true_operator, zero_operator)
from nuisancegrad.problems import (MonteCarloCfg, NuisanceFn,
                                   constant_nuisance, make_oracle,
                                   random_direction, unit_direction)
from nuisancegrad.problems.base import Sample
from nuisancegrad.rng import Rng
from nuisancegrad.simdata import DgpConfig, draw_batch

DGP = DgpConfig(lam=0.5)
MC = MonteCarloCfg(n=100_000, seed=0)


def test_true_operator_constant_when_independent():
    op = plm_true_operator(DgpConfig(lam=0.0))
    vals = op.predict(np.array([[0.0, 0.0], [9.0, -3.0]]))
    assert np.allclose(vals, [[1.0, 1.0], [1.0, 1.0]])


def test_true_operator_action_on_constant():
    # tower property: action on g = 1 is the input mean
    op = plm_true_operator(DGP)
    est, se = op.apply(lambda w: np.ones(w.shape[0]), DGP, MC)
    assert np.all(np.abs(est - [1.0, 1.0]) <= 4 * se)


def test_true_operator_action_on_centered_coordinate():
    # analytic Gaussian moments give [lam, 0] for g(w) = w1 - mean
    op = plm_true_operator(DGP)
    est, se = op.apply(lambda w: w[:, 0] - 2.0, DGP,
                       MonteCarloCfg(n=1_000_000, seed=1))
    assert np.all(np.abs(est - [0.5, 0.0]) <= 4 * se)


def test_operator_action_is_linear():
    op = plm_true_operator(DGP)
    g1 = lambda w: np.sin(w[:, 0])
    g2 = lambda w: np.cos(w[:, 1])
    a, b = 1.7, -0.6
    combo = lambda w: a * g1(w) + b * g2(w)
    e_combo, se_c = op.apply(combo, DGP, MC)
    e1, se1 = op.apply(g1, DGP, MC)
    e2, se2 = op.apply(g2, DGP, MC)
    gap = np.abs(e_combo - (a * e1 + b * e2))
    assert np.all(gap <= 3 * (se_c + abs(a) * se1 + abs(b) * se2))


def test_estimate_operator_zero_inputs():
    batch = draw_batch(Rng(2), DGP, 2_000)
    feat = RFFMap(n_components=50, seed=0).fit(batch.w)
    op = estimate_operator(feat, np.zeros((2_000, 2)), batch.w)
    vals = op.predict(batch.w[:100])
    assert np.max(np.abs(vals)) < 1e-6


def test_estimate_operator_improves_with_samples():
    truth = plm_true_operator(DGP)
    gains = []
    for seed in range(20):
        errs = {}
        for k in (300, 10_000):
            batch = draw_batch(Rng(1_000 + seed), DGP, k)
            feat = RFFMap(n_components=50, seed=seed).fit(batch.w)
            op = estimate_operator(feat, batch.x, batch.w)
            errs[k], _ = frob_error(op, truth, DGP,
                                    MonteCarloCfg(n=20_000, seed=3))
        gains.append(errs[300] - errs[10_000])
    assert np.median(gains) > 0


def test_estimate_operator_deterministic():
    batch = draw_batch(Rng(4), DGP, 1_000)
    preds = []
    for _ in range(2):
        feat = RFFMap(n_components=50, seed=5).fit(batch.w)
        op = estimate_operator(feat, batch.x, batch.w)
        preds.append(op.predict(batch.w[:50]))
    assert np.array_equal(preds[0], preds[1])


# ---------------------------------------------------------------------------
# Frobenius-style operator distance


def test_frob_error_identical_is_zero():
    op = plm_true_operator(DGP)
    est, se = frob_error(op, op, DGP, MC)
    assert est == 0.0


def test_frob_error_constant_offset():
    base = plm_true_operator(DGP)
    shifted = perturbed_operator(base, 1.0, lambda w: np.full(w.shape[0], -0.75))
    est, se = frob_error(base, shifted, DGP, MC)
    assert est == pytest.approx(0.75, abs=1e-12)


def test_frob_error_recovers_perturbation_scale():
    base = plm_true_operator(DGP)
    h = unit_direction("plm_nonorth", DGP, MonteCarloCfg(n=200_000, seed=1))
    rho = 0.42
    pert = perturbed_operator(base, rho, h.parts["g"])
    est, se = frob_error(base, pert, DGP, MonteCarloCfg(n=100_000, seed=2))
    assert abs(est - rho) <= 3 * (se + 0.003)


def test_frob_error_symmetric():
    a = plm_true_operator(DGP)
    b = perturbed_operator(a, 0.3, lambda w: np.sin(w[:, 0]))
    e1, _ = frob_error(a, b, DGP, MC)
    e2, _ = frob_error(b, a, DGP, MC)
    assert e1 == e2


def test_frob_error_dimension_mismatch():
    with pytest.raises(KindMismatch):
        frob_error(zero_operator(2), zero_operator(3), DGP, MC)


# ---------------------------------------------------------------------------
# Orthogonalized oracle


def test_no_score_zero_residual():
    oracle = make_oracle("plm_nonorth")
    no = NoOracle(oracle, plm_true_operator(DGP))
    g = constant_nuisance("plm_nonorth")
    z = Sample(x=np.array([1.0, 2.0]), w=np.array([0.5, 0.5]), y=0.0)
    assert np.array_equal(no.score(np.zeros(2), g, z), np.zeros(2))


def test_no_score_zero_operator_is_plain_score():
    oracle = make_oracle("plm_nonorth")
    no = NoOracle(oracle, zero_operator(2))
    g = NuisanceFn("plm_nonorth", {"g": lambda w: np.sin(w[:, 0])})
    batch = draw_batch(Rng(6), DGP, 200)
    theta = np.array([0.3, -0.8])
    assert np.array_equal(no.score_batch(theta, g, batch),
                          oracle.score_batch(theta, g, batch))


def test_no_score_decomposition_identity():
    # corrected oracle plus the correction reproduces the score exactly
    oracle = make_oracle("plm_nonorth")
    no = NoOracle(oracle, plm_true_operator(DGP))
    g = NuisanceFn("plm_nonorth", {"g": lambda w: np.cos(w[:, 1])})
    batch = draw_batch(Rng(7), DGP, 300)
    theta = np.array([1.2, 0.1])
    total = no.score_batch(theta, g, batch) + no.correction_batch(theta, g, batch)
    assert np.allclose(total, oracle.score_batch(theta, g, batch),
                       rtol=0, atol=1e-12)


def test_no_oracle_rejects_unsupported_base():
    with pytest.raises(Unsupported):
        NoOracle(make_oracle("plm_orth"), plm_true_operator(DGP))


def test_no_oracle_dimension_check():
    with pytest.raises(KindMismatch):
        NoOracle(make_oracle("plm_nonorth", dim=2), zero_operator(3))


# ---------------------------------------------------------------------------
# Certificates


def test_orthogonality_check_passes_for_residualized_loss():
    oracle = make_oracle("plm_orth")
    dirs = [random_direction("plm_orth", DGP, 50 + i, norm_n=50_000)
            for i in range(4)]
    rep = orthogonality_check(oracle, oracle.target(DGP),
                              oracle.true_nuisance(DGP), dirs, DGP,
                              MonteCarloCfg(n=50_000, seed=4))
    assert rep.all_passed


def test_orthogonality_check_fails_for_plain_loss():
    oracle = make_oracle("plm_nonorth")
    const = unit_direction("plm_nonorth", DGP,
                           MonteCarloCfg(n=50_000, seed=1), form="const")
    rep = orthogonality_check(oracle, oracle.target(DGP),
                              oracle.true_nuisance(DGP), [const], DGP,
                              MonteCarloCfg(n=50_000, seed=5))
    check = rep.checks[0]
    assert not check.passed
    # magnitude is the norm of the input mean for the constant direction
    assert check.estimate_norm == pytest.approx(np.sqrt(2.0), rel=0.05)


def test_orthogonality_check_passes_for_corrected_oracle():
    oracle = make_oracle("plm_nonorth")
    no = NoOracle(oracle, plm_true_operator(DGP))
    dirs = [random_direction("plm_nonorth", DGP, 150 + i, norm_n=50_000)
            for i in range(4)]
    rep = orthogonality_check(no, oracle.target(DGP),
                              oracle.true_nuisance(DGP), dirs, DGP,
                              MonteCarloCfg(n=50_000, seed=6))
    assert rep.all_passed


# ---------------------------------------------------------------------------
# Serialization


def test_operator_json_roundtrip():
    batch = draw_batch(Rng(8), DGP, 1_000)
    feat = RFFMap(n_components=50, seed=9).fit(batch.w)
    op = estimate_operator(feat, batch.x, batch.w)
    back = operator_from_json(operator_to_json(op))
    grid = draw_batch(Rng(9), DGP, 128).w
    assert np.allclose(back.predict(grid), op.predict(grid), rtol=0, atol=1e-15)


def test_true_operator_does_not_serialize():
    with pytest.raises(Unsupported):
        operator_to_json(plm_true_operator(DGP))
