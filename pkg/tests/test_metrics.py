import numpy as np
import pytest

from nuisancegrad.errors import NonPositive
from nuisancegrad.metrics import (excess_risk, make_eval_batch,
                                  nonneg_two_term_fit, slope_fit)
from nuisancegrad.problems import MonteCarloCfg, make_oracle
from nuisancegrad.rng import Rng
from nuisancegrad.simdata import DgpConfig, draw_batch

DGP = DgpConfig(lam=0.5)


def _setup():
    oracle = make_oracle("plm_nonorth")
    g0 = oracle.true_nuisance(DGP)
    theta_star = oracle.target(DGP)
    batch = make_eval_batch(DGP, MonteCarloCfg(n=50_000, seed=0))
    return oracle, g0, theta_star, batch


def test_excess_risk_zero_at_target():
    oracle, g0, theta_star, batch = _setup()
    assert excess_risk(oracle, theta_star, g0, batch, theta_star) == 0.0


def test_excess_risk_matches_quadratic_form():
    # analytic expansion: 1/2 (theta - target)' E[XX'] (theta - target)
    oracle, g0, theta_star, batch = _setup()
    theta = theta_star + np.array([0.3, -0.2])
    h = oracle.population_hessian(DGP)
    expected = 0.5 * (theta - theta_star) @ h @ (theta - theta_star)
    got = excess_risk(oracle, theta, g0, batch, theta_star)
    assert got == pytest.approx(expected, rel=0.05)


def test_excess_risk_monotone_along_ray():
    oracle, g0, theta_star, batch = _setup()
    direction = np.array([0.5, 0.5])
    vals = [excess_risk(oracle, theta_star + t * direction, g0, batch, theta_star)
            for t in (0.5, 1.0, 2.0)]
    assert vals[0] < vals[1] < vals[2]


def test_common_random_numbers_reduce_difference_variance():
    # gap estimates between two nearby points: shared draws beat fresh draws
    oracle, g0, theta_star, _ = _setup()
    t1 = theta_star + np.array([0.10, 0.00])
    t2 = theta_star + np.array([0.11, 0.00])
    shared, independent = [], []
    for seed in range(40):
        b1 = draw_batch(Rng(seed), DGP, 2_000)
        b2 = draw_batch(Rng(1_000 + seed), DGP, 2_000)
        shared.append(excess_risk(oracle, t1, g0, b1, theta_star)
                      - excess_risk(oracle, t2, g0, b1, theta_star))
        independent.append(excess_risk(oracle, t1, g0, b1, theta_star)
                           - excess_risk(oracle, t2, g0, b2, theta_star))
    assert np.var(shared) < np.var(independent)


def test_slope_fit_linear():
    rs = [0.1, 0.2, 0.4, 0.8]
    fit = slope_fit([(r, r) for r in rs])
    assert fit.slope == pytest.approx(1.0)
    assert fit.r2 == pytest.approx(1.0)


def test_slope_fit_quadratic():
    rs = [0.1, 0.2, 0.4, 0.8]
    fit = slope_fit([(r, r ** 2) for r in rs])
    assert fit.slope == pytest.approx(2.0)


def test_slope_fit_constant():
    fit = slope_fit([(r, 3.0) for r in (0.1, 0.2, 0.4)])
    assert fit.slope == pytest.approx(0.0, abs=1e-12)


def test_slope_fit_rejects_nonpositive():
    with pytest.raises(NonPositive):
        slope_fit([(0.1, 1.0), (0.2, -1.0), (0.4, 2.0)])
    with pytest.raises(NonPositive):
        slope_fit([(0.1, 1.0), (0.2, 2.0)])


def test_nonneg_two_term_fit_recovers_coefficients():
    rs = np.array([0.4, 0.2, 0.1, 0.05] * 2)
    rhos = np.concatenate([np.zeros(4), [0.4, 0.2, 0.1, 0.05]])
    y = 0.5 * rs ** 4 + 2.0 * rs ** 2 * rhos ** 2
    c1, c2, resid = nonneg_two_term_fit(rs, rhos, y)
    assert c1 == pytest.approx(0.5, rel=1e-6)
    assert c2 == pytest.approx(2.0, rel=1e-6)
    assert resid < 1e-10
