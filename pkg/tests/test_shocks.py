import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import integrate, stats

from welfare_rank.errors import ConfigurationError, DomainError
from welfare_rank.shocks import FAMILIES, ShockDistribution


@pytest.mark.parametrize("family", FAMILIES)
@pytest.mark.parametrize("unit", [False, True])
def test_density_integrates_to_one(family, unit):
    assert abs(ShockDistribution(family, 1.3, unit).total_mass() - 1) < 1e-8


@pytest.mark.parametrize("family", FAMILIES)
def test_mean_zero_and_variance(family):
    d = ShockDistribution(family, 1.0)
    assert abs(d.frozen.mean()) < 1e-12
    assert_allclose(d.frozen.var(), math.pi**2 / 3, rtol=1e-12)
    u = ShockDistribution(family, 1.0, unit_variance=True)
    assert_allclose(u.frozen.var(), 1.0, rtol=1e-12)


@pytest.mark.parametrize("family", FAMILIES)
def test_cdf_monotone(family):
    x = np.linspace(-20, 20, 2001)
    assert np.all(np.diff(ShockDistribution(family).cdf(x)) >= 0)


@pytest.mark.parametrize("family", FAMILIES)
@pytest.mark.parametrize("delta", [-6.0, -1.0, 0.0, 0.7, 4.0])
def test_positive_part_matches_adaptive_quadrature(family, delta):
    d = ShockDistribution(family, 0.8)
    ref, _ = integrate.quad(lambda e: (delta + e) * d.pdf(e), -delta, np.inf, epsabs=1e-13, epsrel=1e-12)
    assert_allclose(d.expected_positive_part(delta), ref, rtol=1e-8, atol=1e-12)


def test_normal_unit_variance_at_zero_matches_monte_carlo():
    # E[eps_+] for a standard normal; the closed form phi(0) is the large-sample limit
    rng = np.random.default_rng(7)
    draws = rng.standard_normal(10_000_000)
    mc = np.maximum(draws, 0).mean()
    se = np.maximum(draws, 0).std() / math.sqrt(draws.size)
    val = float(ShockDistribution("normal", unit_variance=True).expected_positive_part(0.0))
    assert abs(val - mc) < 4 * se
    assert_allclose(val, stats.norm.pdf(0), rtol=1e-10)


def test_positive_part_vanishes_far_left():
    for fam in FAMILIES:
        assert ShockDistribution(fam).expected_positive_part(-200.0) < 1e-12


def test_conditional_surplus_logistic_closed_form():
    pa = np.linspace(0.01, 0.95, 40)
    assert_allclose(ShockDistribution("logistic").conditional_surplus(pa), -np.log1p(-pa) / pa, rtol=1e-9)


def test_errors():
    with pytest.raises(ConfigurationError):
        ShockDistribution("cauchy")
    with pytest.raises(DomainError):
        ShockDistribution("normal", sigma=0)
    with pytest.raises(DomainError):
        ShockDistribution().expected_positive_part(0.0, nodes=16)
    with pytest.raises(DomainError):
        ShockDistribution().conditional_surplus(1.0)
