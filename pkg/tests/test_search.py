from itertools import combinations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from scipy.optimize import brentq
from scipy.special import expit

from welfare_rank.errors import DegenerateSelectionError, DomainError, InputError
from welfare_rank.search import (
    ModelParams,
    VacancyDistribution,
    VacancyLottery,
    application_probability,
    belief_decomposition,
    decompose_gamma,
    employment_value_gain,
    expected_gamma,
    gamma_closed,
    gamma_index,
    gamma_numeric,
    m_factor,
    reservation_utility,
    solve_value_unemployment,
    solve_value_unemployment_batch,
    surplus,
    top_share_weights,
    value_with_rs_myopic,
)

# r + q = 1 makes k_bar = k and R_bar = R
UNIT = dict(r=0.5, q=0.5)


def grid():
    p = np.linspace(0.01, 1.0, 10)
    d = np.linspace(-5, 5, 10)
    s = np.array([0.5, 1.0, 2.0])
    P, D, S = np.meshgrid(p, d, s, indexing="ij")
    return P.ravel(), D.ravel(), S.ravel()


def test_params_derived_and_invalid():
    pr = ModelParams(r=0.05, q=0.15, k=0.5, R=2.0)
    assert_allclose(pr.k_bar, 0.2 * 0.5)
    assert_allclose(pr.R_bar, 0.2 * 2.0)
    for bad in (dict(r=0), dict(q=-1), dict(k=-1), dict(R=-1), dict(sigma=0), dict(alpha0=-1), dict(alpha1=-1)):
        with pytest.raises(DomainError):
            ModelParams(**bad)


def test_lottery_and_distribution_invariants():
    with pytest.raises(DomainError):
        VacancyLottery(0.0, 1.0)
    with pytest.raises(DomainError):
        VacancyLottery(0.5, np.inf)
    with pytest.raises(DomainError):
        VacancyDistribution([0.5, 0.5], [1, 2], [0.6, 0.6])
    with pytest.raises(InputError):
        VacancyDistribution([], [])
    d = VacancyDistribution.from_lotteries([VacancyLottery(0.3, 1.0), VacancyLottery(1.0, 0.0)])
    assert_allclose(d.weights, [0.5, 0.5])


def test_reservation_utility_examples():
    pr = ModelParams(**UNIT, k=0.1, R=0.2)
    assert_allclose(reservation_utility(1.0, 0.5, pr), 1.4)
    assert_allclose(reservation_utility(1.0, 1.0, pr), 1.0 + pr.k_bar)
    with pytest.raises(DomainError):
        reservation_utility(1.0, 0.0, pr)


def test_surplus_examples():
    pr = ModelParams(**UNIT, k=0.1, R=0.2)
    assert_allclose(surplus(2.0, 0.5, 1.0, pr), 0.6)
    assert surplus(reservation_utility(1.0, 0.3, pr), 0.3, 1.0, pr) == pytest.approx(0.0, abs=1e-15)
    p = np.linspace(0.05, 1, 30)
    assert np.all(np.diff(surplus(1.0, p, 0.5, pr)) > 0)


def test_application_probability_examples():
    assert application_probability(0.0, 1.0) == 0.5
    assert_allclose(application_probability(2.0, 2.0), 0.7310585786300049)
    x = application_probability(-np.logspace(0, 3, 20), 1.0)
    assert np.all(np.diff(x) <= 0) and x[-1] < 1e-300 + 1e-100
    with pytest.raises(DomainError):
        application_probability(0.0, 0.0)


def test_application_rule_as_threshold_rule():
    rng = np.random.default_rng(3)
    delta, sigma, n = 0.4, 1.5, 100_000
    eps = rng.logistic(scale=sigma, size=n)
    freq = np.mean(delta + eps > 0)
    pa = application_probability(delta, sigma)
    assert abs(freq - pa) < 3 * np.sqrt(pa * (1 - pa) / n)


def test_gamma_closed_examples():
    assert_allclose(gamma_closed(1.0, 0.0, 1.0), np.log(2))
    assert gamma_closed(0.0, 1.0, 1.0) == 0.0
    assert_allclose(gamma_closed(0.3, 1000.0, 1.0), 300.0)
    assert np.isfinite(gamma_closed(0.3, 1e6, 1e-3))


def test_gamma_closed_matches_quadrature_on_grid():
    P, D, S = grid()
    assert np.max(np.abs(gamma_closed(P, D, S) - np.array([gamma_numeric(p, d, s) for p, d, s in zip(P, D, S)]))) < 1e-6


@pytest.mark.parametrize("family", ["logistic", "gumbel", "normal"])
def test_gamma_numeric_vanishes_far_left(family):
    from welfare_rank.shocks import ShockDistribution

    assert gamma_numeric(0.7, -500.0, 1.0, ShockDistribution(family)) < 1e-12


def test_gamma_monotone_in_U_and_p():
    pr = ModelParams()
    U = np.linspace(-2, 3, 21)
    p = np.linspace(0.05, 0.95, 21)
    P, UU = np.meshgrid(p, U)
    h = 1e-6
    dU = (gamma_index(P, UU + h, 0.3, pr) - gamma_index(P, UU - h, 0.3, pr)) / (2 * h)
    dp = (gamma_index(P + h, UU, 0.3, pr) - gamma_index(P - h, UU, 0.3, pr)) / (2 * h)
    assert np.all(dU > 0) and np.all(dp > 0)


def test_m_factor_examples():
    assert m_factor(0.0) == 1.0
    assert_allclose(m_factor(1e-9), 1.0, atol=1e-8)
    assert_allclose(m_factor(0.5), 2 * np.log(2))
    with pytest.raises(DomainError):
        m_factor(1.0)
    with pytest.raises(DomainError):
        m_factor(-0.1)
    assert m_factor(1 - 1e-12) > 25


def test_m_factor_taylor_bound():
    pa = np.linspace(0, 0.1, 101)
    assert np.all(np.abs(m_factor(pa) - (1 + pa / 2)) <= pa**2 / 2)


def test_m_factor_convex_increasing():
    pa = np.linspace(0.001, 0.99, 500)
    m = m_factor(pa)
    assert np.all(np.diff(m) > 0) and np.all(np.diff(m, 2) > 0) and np.all(m >= 1)


def test_decomposition_identity_and_example():
    P, D, S = grid()
    f = decompose_gamma(P, D, S)
    assert np.max(np.abs(f.product - gamma_closed(P, D, S))) < 1e-12
    assert_allclose(f.m, S * m_factor(f.p_a), rtol=1e-11)
    one = decompose_gamma(1.0, 0.0, 1.0)
    assert_allclose([one.p, one.p_a, one.m], [1.0, 0.5, np.log(2) / 0.5])
    assert_allclose(one.product, np.log(2))
    assert_allclose(f.p_h, P * application_probability(D, S), rtol=0, atol=0)


def test_small_pa_approximation():
    # delta chosen so that p_a sweeps (0, 0.05]
    pa = np.linspace(1e-5, 0.05, 200)
    delta = np.log(pa / (1 - pa))
    g = gamma_closed(0.3, delta, 1.0)
    approx = 0.3 * pa * (1 + pa / 2)
    rel = np.abs(approx - g) / g
    assert rel.max() < 0.01
    # leading series term is p_a^2 / 3; the next one adds p_a^3 / 12
    assert np.all(rel <= pa**2 / 3 * (1 + pa))
    assert rel[pa <= 0.01].max() < 0.001


def test_employment_value_gain():
    pr = ModelParams(r=0.05, q=0.15)
    assert employment_value_gain(1.0, 1.0, pr) == 0.0
    assert_allclose(employment_value_gain(2.0, 1.0, pr), 5.0)
    w = np.linspace(-2, 2, 9)
    assert np.all(np.sign(employment_value_gain(w, 0.3, pr)) == np.sign(w - 0.3))


def test_value_of_unemployment_alpha_zero():
    pr = ModelParams(alpha0=0.0, u_b=0.4)
    assert solve_value_unemployment(pr, VacancyDistribution([0.5], [2.0])) == 0.4


def test_value_of_unemployment_single_atom_matches_brentq():
    pr = ModelParams(u_b=0.1, k=0.3, R=0.2, sigma=0.7, alpha0=0.8)
    U = 5.0
    z = solve_value_unemployment(pr, VacancyDistribution([1.0], [U]))
    c = pr.alpha0 / pr.rq

    def g(x):
        return pr.u_b + c * pr.sigma * np.logaddexp(0, (U - x - pr.k_bar) / pr.sigma) - x

    assert abs(z - brentq(g, pr.u_b, 100, xtol=1e-14)) < 1e-9


def test_value_increasing_in_alpha0_and_map_decreasing(rng):
    p = rng.uniform(0.05, 0.9, 30)
    U = rng.normal(1, 1, 30)
    d = VacancyDistribution(p, U)
    vals = [solve_value_unemployment(ModelParams(alpha0=a), d) for a in np.linspace(0, 3, 13)]
    assert np.all(np.diff(vals) >= -1e-12)
    pr = ModelParams(alpha0=2.0)
    z = solve_value_unemployment(pr, d)
    c = pr.alpha0 / pr.rq
    h = 1e-5
    slope = c * (expected_gamma(z + h, d, pr) - expected_gamma(z - h, d, pr)) / (2 * h)
    assert slope < 0


@given(st.integers(0, 2**31), st.floats(0.05, 20.0))
def test_value_fixed_point_against_brentq(seed, alpha0):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 15))
    d = VacancyDistribution(rng.uniform(0.01, 1, n), rng.normal(0, 2, n), rng.dirichlet(np.ones(n)))
    pr = ModelParams(alpha0=alpha0, sigma=float(rng.uniform(0.2, 3)), k=float(rng.uniform(0, 1)))
    z = solve_value_unemployment(pr, d)
    c = alpha0 / pr.rq
    ref = brentq(lambda x: pr.u_b + c * expected_gamma(x, d, pr) - x, pr.u_b, pr.u_b + c * expected_gamma(pr.u_b, d, pr) + 1,
                 xtol=1e-13)
    assert abs(z - ref) < 1e-8


def test_batch_solver_agrees(rng):
    pr = ModelParams(alpha0=4.0)
    p = rng.uniform(0.01, 1, (20, 12))
    U = rng.normal(0, 2, (20, 12))
    batch = solve_value_unemployment_batch(pr, p, U)
    single = [solve_value_unemployment(pr, VacancyDistribution(p[i], U[i])) for i in range(20)]
    assert_allclose(batch, single, atol=1e-9)


def test_top_share_weights_fractional_boundary():
    w = top_share_weights([3.0, 1.0, 2.0, 2.0], np.full(4, 0.25), 0.6)
    assert_allclose(w, [0.25, 0.0, 0.25, 0.1])
    assert_allclose(w.sum(), 0.6)
    with pytest.raises(DomainError):
        top_share_weights([1.0], [1.0], 0.0)
    with pytest.raises(DegenerateSelectionError):
        top_share_weights([1.0, 2.0], [0.0, 0.0], 0.5)


def test_value_with_rs_examples(rng):
    pr = ModelParams(alpha0=1.3, alpha1=1.3)
    d = VacancyDistribution(rng.uniform(0.05, 1, 8), rng.normal(0, 1, 8))
    rV0 = solve_value_unemployment(pr, d)
    # s = 1 and alpha1 = alpha0 give back the baseline Bellman right-hand side, i.e. rV0
    assert_allclose(value_with_rs_myopic(pr, d, rng.normal(size=8), 1.0, rV0), rV0, atol=1e-9)
    base = value_with_rs_myopic(pr, d, np.arange(8.0), 0.5, rV0) - pr.u_b
    doubled = value_with_rs_myopic(ModelParams(alpha0=1.3, alpha1=2.6), d, np.arange(8.0), 0.5, rV0) - pr.u_b
    assert_allclose(doubled, 2 * base)


@given(st.integers(0, 2**31))
def test_gamma_score_is_optimal_among_scores(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 13))
    pr = ModelParams(alpha1=1.0)
    d = VacancyDistribution(rng.uniform(0.01, 1, n), rng.normal(0, 2, n))
    rV0 = solve_value_unemployment(pr, d)
    gam = gamma_index(d.p, d.U, rV0, pr)
    for k in range(1, n + 1):
        s = k / n
        best = value_with_rs_myopic(pr, d, gam, s, rV0)
        brute = max(sum(gam[list(c)]) for c in combinations(range(n), k))
        assert_allclose(best, pr.u_b + pr.alpha1 / pr.rq * brute / n / s, rtol=1e-12)
        other = value_with_rs_myopic(pr, d, rng.normal(size=n), s, rV0)
        assert best >= other - 1e-12


def test_belief_decomposition(rng):
    pr = ModelParams()
    p = rng.uniform(0.05, 1, 10)
    truth = VacancyDistribution(p, rng.normal(0, 1, 10))
    same = belief_decomposition(truth, truth, None, 0.3, pr)
    assert same.info == 0.0
    pess = VacancyDistribution(p, truth.U - 0.5)
    bd = belief_decomposition(pess, truth, None, 0.3, pr)
    assert bd.full == pytest.approx(bd.pure + bd.info, abs=1e-12)
    assert bd.info >= 0
    for _ in range(20):
        sub = VacancyDistribution(p, truth.U + rng.normal(0, 1, 10))
        b = belief_decomposition(sub, truth, rng.normal(size=10), 0.5, pr)
        assert abs(b.full - (b.pure + b.info)) <= 1e-12
