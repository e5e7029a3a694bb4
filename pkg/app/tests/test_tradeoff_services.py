import math
import numpy as np
import pytest
from scipy import stats
from exceptions.numeric_exceptions import DomainException
from exceptions.params_exceptions import InvalidParamsException
from schemas.models import TestParams
from services.tradeoff_services import decision_sphere, t_prime
from .factories import CapacityParamsFactory, EnvelopeParamsFactory


def test_alpha_and_beta_match_noncentral_chi2(tradeoff_service):
    params = EnvelopeParamsFactory(n=4)
    point = tradeoff_service.tradeoff_at(params, 3.0)
    assert point.alpha == pytest.approx(stats.ncx2.sf(9.0, 4, 4.0), rel=1e-9)
    assert point.beta == pytest.approx(stats.ncx2.cdf(4.5, 4, 8.0), rel=1e-9)


def test_zero_power_reduces_to_central_chi2(tradeoff_service):
    params = EnvelopeParamsFactory(gamma=0.0)
    point = tradeoff_service.tradeoff_at(params, 2.0)
    assert point.alpha == pytest.approx(stats.chi2.sf(4.0, 6), rel=1e-12)
    assert point.beta == pytest.approx(stats.chi2.cdf(2.0, 6), rel=1e-12)


def test_negative_threshold_is_rejected(tradeoff_service):
    with pytest.raises(DomainException):
        tradeoff_service.tradeoff_at(EnvelopeParamsFactory(), -1.0)


def test_variances_must_be_ordered():
    with pytest.raises(InvalidParamsException):
        TestParams(n=2, gamma=1.0, sigma2=1.0, theta2=1.0)


def test_threshold_solve_reproduces_beta(tradeoff_service):
    params = CapacityParamsFactory()
    t = tradeoff_service.solve_t_for_beta(params, 1.0 / 16.0)
    assert tradeoff_service.tradeoff_at(params, t).beta == pytest.approx(1.0 / 16.0, rel=1e-10)


def test_threshold_solve_deep_in_the_tail(tradeoff_service):
    params = EnvelopeParamsFactory(n=200, gamma=3.0, theta2=4.0)
    log_beta = -200.0 * math.log(2.0)
    t = tradeoff_service.solve_t_for_beta(params, log_beta=log_beta)
    assert tradeoff_service.tradeoff_at(params, t).log_beta == pytest.approx(log_beta, rel=1e-10)


def test_capacity_bound_for_sixteen_codewords(tradeoff_service):
    value = tradeoff_service.f_exact(CapacityParamsFactory(), 1.0 / 16.0).value
    assert value == pytest.approx(0.15, abs=0.005)


def test_f_exact_endpoints(tradeoff_service):
    params = EnvelopeParamsFactory()
    assert tradeoff_service.f_exact(params, 1.0).value == 0.0
    assert tradeoff_service.f_exact(params, 0.0).value == 1.0
    with pytest.raises(DomainException):
        tradeoff_service.f_exact(params, 1.5)


@pytest.mark.parametrize("n", [1, 2, 6, 20])
def test_f_exact_is_nonincreasing_in_power(tradeoff_service, n):
    values = [
        tradeoff_service.f_exact(EnvelopeParamsFactory(n=n, gamma=float(gamma)), 1e-3).value
        for gamma in np.linspace(0.0, 20.0, 11)
    ]
    assert np.all(np.diff(values) <= 1e-12)


def test_f_exact_is_convex_in_beta(tradeoff_service):
    params = EnvelopeParamsFactory()
    rng = np.random.default_rng(3)
    for _ in range(20):
        low, high = np.sort(rng.uniform(1e-6, 0.9, size=2))
        middle = tradeoff_service.f_exact(params, 0.5 * (low + high)).value
        chord = 0.5 * (tradeoff_service.f_exact(params, low).value + tradeoff_service.f_exact(params, high).value)
        assert middle <= chord + 1e-10


@pytest.mark.parametrize(
    "params, beta",
    [
        (TestParams(n=4, gamma=2.0, sigma2=1.0, theta2=3.0), 1e-4),
        (TestParams(n=6, gamma=1.0, sigma2=1.0, theta2=2.0), 1e-3),
        (TestParams(n=2, gamma=10.0, sigma2=1.0, theta2=11.0), 1.0 / 16.0),
    ],
)
def test_nonparametric_maximum_equals_the_exact_tradeoff(tradeoff_service, params, beta):
    exact = tradeoff_service.f_exact(params, beta).value
    assert tradeoff_service.f_nonparametric(params, beta).value == pytest.approx(exact, rel=1e-8)


def test_verdu_han_mode_stays_below(tradeoff_service):
    params = EnvelopeParamsFactory()
    exact = tradeoff_service.f_exact(params, 1e-3).value
    relaxed = tradeoff_service.f_nonparametric(params, 1e-3, mode="verdu-han").value
    assert relaxed <= exact * (1.0 + 1e-12)


def test_fixed_threshold_mode_needs_a_threshold(tradeoff_service):
    with pytest.raises(DomainException):
        tradeoff_service.f_nonparametric(EnvelopeParamsFactory(), 1e-3, mode="fixed-t")
    params = EnvelopeParamsFactory()
    t = tradeoff_service.solve_t_for_beta(params, 1e-3)
    at_t = tradeoff_service.f_nonparametric(params, 1e-3, mode="fixed-t", t=t).value
    assert at_t == pytest.approx(tradeoff_service.f_exact(params, 1e-3).value, rel=1e-9)


def test_beta_derivative_matches_central_differences(tradeoff_service):
    params = EnvelopeParamsFactory()
    beta = 0.01
    h = 1e-6 * beta
    derivatives = tradeoff_service.f_derivatives(params, beta)
    fd = (tradeoff_service.f_exact(params, beta + h).value - tradeoff_service.f_exact(params, beta - h).value) / (2 * h)
    assert derivatives.df_dbeta == pytest.approx(fd, rel=1e-5)
    assert derivatives.d2f_dbeta2 >= 0.0
    assert not derivatives.at_origin


def test_power_derivative_matches_central_differences(tradeoff_service):
    params = EnvelopeParamsFactory()
    h = 1e-5
    derivatives = tradeoff_service.f_derivatives(params, 0.01)
    up = tradeoff_service.f_exact(params.with_gamma(1.0 + h), 0.01).value
    down = tradeoff_service.f_exact(params.with_gamma(1.0 - h), 0.01).value
    assert derivatives.df_dgamma == pytest.approx((up - down) / (2 * h), rel=1e-5)


def test_derivatives_at_zero_power(tradeoff_service):
    params = EnvelopeParamsFactory(gamma=0.0)
    beta = 0.01
    h = 1e-6 * beta
    derivatives = tradeoff_service.f_derivatives(params, beta)
    fd = (tradeoff_service.f_exact(params, beta + h).value - tradeoff_service.f_exact(params, beta - h).value) / (2 * h)
    assert derivatives.at_origin
    assert derivatives.df_dbeta == pytest.approx(fd, rel=1e-5)
    assert derivatives.df_dgamma < 0.0


def test_second_derivatives_match_central_differences(tradeoff_service):
    beta, gamma = 0.01, 1.0
    h_beta, h_gamma = 1e-5 * beta, 1e-5

    def at(g, b):
        return tradeoff_service.f_derivatives(EnvelopeParamsFactory(gamma=g), b)

    center = at(gamma, beta)
    beta_up, beta_down = at(gamma, beta + h_beta), at(gamma, beta - h_beta)
    gamma_up, gamma_down = at(gamma + h_gamma, beta), at(gamma - h_gamma, beta)
    assert center.d2f_dbeta2 == pytest.approx((beta_up.df_dbeta - beta_down.df_dbeta) / (2 * h_beta), rel=1e-6)
    assert center.d2f_dbeta_dgamma == pytest.approx(
        (gamma_up.df_dbeta - gamma_down.df_dbeta) / (2 * h_gamma), rel=1e-6
    )
    assert center.d2f_dgamma2 == pytest.approx(
        (gamma_up.df_dgamma - gamma_down.df_dgamma) / (2 * h_gamma), rel=1e-6
    )


def test_second_derivatives_at_zero_power(tradeoff_service):
    beta, h = 0.01, 5e-5
    h_beta = 1e-5 * beta

    def at(g, b=beta):
        return tradeoff_service.f_derivatives(EnvelopeParamsFactory(gamma=g), b)

    origin, first, second = at(0.0), at(h), at(2 * h)

    def forward(name):
        # second-order one-sided difference in gamma
        return (-3.0 * getattr(origin, name) + 4.0 * getattr(first, name) - getattr(second, name)) / (2 * h)

    assert origin.at_origin
    assert origin.d2f_dbeta_dgamma == pytest.approx(forward("df_dbeta"), rel=1e-5)
    assert origin.d2f_dgamma2 == pytest.approx(forward("df_dgamma"), rel=1e-5)
    up, down = at(0.0, beta + h_beta), at(0.0, beta - h_beta)
    assert origin.d2f_dbeta2 == pytest.approx((up.df_dbeta - down.df_dbeta) / (2 * h_beta), rel=1e-5)


def test_threshold_for_one_dimension_at_zero_power(tradeoff_service):
    # beta = P(chi2_1 <= t^2 / 4) = 1/2 puts t / 2 at the median of |N(0, 1)|
    params = TestParams(n=1, gamma=0.0, sigma2=1.0, theta2=4.0)
    assert tradeoff_service.solve_t_for_beta(params, 0.5) == pytest.approx(1.348980, abs=1e-6)


def test_log_likelihood_threshold_at_zero():
    params = EnvelopeParamsFactory()
    expected = 3.0 * math.log(2.0) + 3.0
    assert float(t_prime(params, 0.0)) == pytest.approx(expected)


def test_decision_sphere_is_empty_above_the_information_density():
    _, radius2 = decision_sphere(10.0, 1.0, 2, 100.0)
    assert radius2 < 0.0
    scale, radius2 = decision_sphere(10.0, 1.0, 2, 0.0)
    assert scale == pytest.approx(1.1)
    assert radius2 == pytest.approx(2.0 * 1.1 * (1.0 + math.log(11.0)))
