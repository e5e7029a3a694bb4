import math
import numpy as np
import pytest
from exceptions.numeric_exceptions import DomainException
from services import saddlepoint_services
from services.saddlepoint_services import augustin_capacity, corrections, kappa_set, theta_tilde
from .factories import EnvelopeParamsFactory

SNR_5DB = 10.0**0.5


def test_cumulant_function_vanishes_at_zero_and_one():
    assert kappa_set(0.0, 2.0, 1.0, 3.0).kappa == pytest.approx(0.0, abs=1e-15)
    assert kappa_set(1.0, 2.0, 1.0, 3.0).kappa == pytest.approx(0.0, abs=1e-15)


def test_cumulant_derivatives_match_central_differences():
    h = 1e-6
    s, gamma, sigma2, theta2 = 0.5, 2.0, 1.0, 3.0
    up = kappa_set(s + h, gamma, sigma2, theta2)
    down = kappa_set(s - h, gamma, sigma2, theta2)
    state = kappa_set(s, gamma, sigma2, theta2)
    assert state.dkappa == pytest.approx((up.kappa - down.kappa) / (2 * h), abs=1e-7)
    assert state.d2kappa == pytest.approx((up.dkappa - down.dkappa) / (2 * h), abs=1e-7)
    assert state.d3kappa == pytest.approx((up.d2kappa - down.d2kappa) / (2 * h), abs=1e-7)


def test_cumulant_function_needs_positive_eta():
    with pytest.raises(DomainException):
        kappa_set(-2.0, 2.0, 1.0, 3.0)


def test_corrections_are_finite_at_the_edges():
    for s in (0.0, 1.0):
        state = corrections(kappa_set(s, 2.0, 1.0, 3.0), 20, "full")
        assert math.isfinite(state.a_corr)
        assert math.isfinite(state.b_corr)


def test_tilted_variance_at_unit_tilt_is_the_output_variance():
    assert theta_tilde(1.0, 10.0, 1.0) == pytest.approx(11.0)
    assert theta_tilde(1.0, 0.5, 1.0) == pytest.approx(1.5)
    with pytest.raises(DomainException):
        theta_tilde(0.0, 1.0, 1.0)


def test_augustin_capacity_is_continuous_at_unit_tilt():
    capacity = augustin_capacity(1.0, 10.0, 1.0)
    assert capacity == pytest.approx(0.5 * math.log(11.0))
    assert augustin_capacity(1.0 - 1e-7, 10.0, 1.0) == pytest.approx(capacity, rel=1e-5)


def test_capacity_in_bits(saddlepoint_service):
    report = saddlepoint_service.sphere_packing(0.5, 10.0, 1.0)
    assert report.capacity_nats / math.log(2.0) == pytest.approx(1.73, abs=0.005)
    report = saddlepoint_service.sphere_packing(0.5, SNR_5DB, 1.0)
    assert report.capacity_nats / math.log(2.0) == pytest.approx(1.03, abs=0.005)


def test_critical_rate_at_5db(saddlepoint_service):
    report = saddlepoint_service.sphere_packing(0.3, SNR_5DB, 1.0)
    assert report.critical_rate_nats / math.log(2.0) == pytest.approx(0.577, abs=0.005)


def test_sphere_packing_exponent_shape(saddlepoint_service):
    capacity = 0.5 * math.log(1.0 + SNR_5DB)
    reports = saddlepoint_service.exponent_curve(np.linspace(0.2, 0.95, 8) * capacity, SNR_5DB, 1.0)
    exponents = [report.esp for report in reports]
    assert all(value > 0.0 for value in exponents)
    assert np.all(np.diff(exponents) < 0.0)
    assert all(0.0 < report.s_star < 1.0 for report in reports)
    above = saddlepoint_service.sphere_packing(1.1 * capacity, SNR_5DB, 1.0)
    assert above.esp == 0.0


def test_sphere_packing_rejects_nonpositive_rate(saddlepoint_service):
    with pytest.raises(DomainException):
        saddlepoint_service.sphere_packing(0.0, SNR_5DB, 1.0)


@pytest.mark.parametrize(
    "variant, n",
    [("full", n) for n in (10, 20, 50, 100, 200, 500)] + [("hat", n) for n in (20, 50, 100, 200, 500)],
)
def test_saddlepoint_tracks_the_exact_tradeoff(saddlepoint_service, tradeoff_service, variant, n):
    params = EnvelopeParamsFactory(n=n, gamma=SNR_5DB, theta2=SNR_5DB + 1.0)
    log_beta = -n * 0.8 * math.log(2.0)
    exact = tradeoff_service.f_exact(params, log_beta=log_beta)
    approximation = saddlepoint_service.f_saddlepoint(params, log_beta=log_beta, variant=variant)
    assert approximation.log_value == pytest.approx(exact.log_magnitude, rel=0.05)
    assert approximation.theta2 == params.theta2


def test_reduced_saddlepoint_below_the_critical_rate(saddlepoint_service, tradeoff_service):
    params = EnvelopeParamsFactory(n=20, gamma=SNR_5DB, theta2=SNR_5DB + 1.0)
    log_beta = -20 * 0.58 * math.log(2.0)
    exact = tradeoff_service.f_exact(params, log_beta=log_beta)
    approximation = saddlepoint_service.f_saddlepoint(params, log_beta=log_beta, variant="hat")
    assert approximation.log_value == pytest.approx(exact.log_magnitude, rel=0.05)


def test_critical_rate_is_solved_once_per_channel(test_settings, mocker):
    brentq = mocker.spy(saddlepoint_services.optimize, "brentq")
    service = saddlepoint_services.SaddlepointService(test_settings)
    capacity = 0.5 * math.log(1.0 + SNR_5DB)
    reports = service.exponent_curve(np.linspace(0.2, 0.9, 5) * capacity, SNR_5DB, 1.0)
    assert brentq.call_count == 1
    assert len({report.critical_rate_nats for report in reports}) == 1


def test_saddlepoint_needs_an_interior_beta(saddlepoint_service):
    with pytest.raises(DomainException):
        saddlepoint_service.f_saddlepoint(EnvelopeParamsFactory(), 1.0)


@pytest.mark.slow
def test_finite_n_exponent_approaches_sphere_packing(saddlepoint_service):
    rate = 0.8 * math.log(2.0)
    esp = saddlepoint_service.sphere_packing(rate, SNR_5DB, 1.0).esp
    gaps = []
    for n in (200, 400, 800):
        result = saddlepoint_service.f_saddlepoint_exponent(n, SNR_5DB, 1.0, log_beta=-n * rate)
        gaps.append(-result.log_value / n - esp)
    assert gaps[0] > gaps[1] > gaps[2] > 0.0
