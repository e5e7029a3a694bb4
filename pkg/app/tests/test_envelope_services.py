import math
import numpy as np
import pytest
from scipy import optimize
from core import special_functions
from core.special_functions import log_bessel_i, marcum_q
from exceptions.numeric_exceptions import DomainException
from schemas.models import TestParams
from services.tradeoff_services import log_alpha_pair, log_beta_pair, t_prime

N, SIGMA2, THETA2 = 6, 1.0, 2.0


def test_xi_terms_against_direct_marcum_evaluation(envelope_service):
    t, gamma = 3.0, 1.0
    xi1, xi2, xi3 = envelope_service.xi_terms(t, gamma, N, SIGMA2, THETA2)
    root_ng = math.sqrt(N * gamma)
    scale = math.exp(float(t_prime(TestParams(n=N, gamma=gamma, sigma2=SIGMA2, theta2=THETA2), t)))
    # both inner thresholds clamp to zero at this t
    expected_xi1 = marcum_q(3.0, root_ng, t).value - 1.0
    expected_xi2 = scale * (1.0 - marcum_q(3.0, root_ng * math.sqrt(2.0), t / math.sqrt(2.0)).value)
    expected_xi3 = 3.0 * (t / root_ng) ** 3 * math.exp(
        -0.5 * (N * gamma + t * t) + log_bessel_i(3.0, root_ng * t).log_magnitude
    )
    assert xi1 == pytest.approx(expected_xi1, rel=1e-10)
    assert xi2 == pytest.approx(expected_xi2, rel=1e-10)
    assert xi3 == pytest.approx(expected_xi3, rel=1e-10)


def test_boundary_threshold_is_a_root(envelope_service):
    t0 = envelope_service.solve_t0(1.0, N, SIGMA2, THETA2)
    assert t0 > 0.0
    assert sum(envelope_service.xi_terms(t0, 1.0, N, SIGMA2, THETA2)) == pytest.approx(0.0, abs=1e-10)


def test_boundary_endpoints_are_ordered(envelope_service):
    boundary = envelope_service.envelope_endpoints(1.0, N, SIGMA2, THETA2)
    assert 0.0 < boundary.bar_beta < boundary.beta0 < 1.0
    assert boundary.bar_t_star <= boundary.t0
    assert boundary.roots == 1


def test_boundary_needs_positive_power(envelope_service):
    with pytest.raises(DomainException):
        envelope_service.envelope_endpoints(0.0, N, SIGMA2, THETA2)


def test_cardinality_threshold_at_10db(envelope_service):
    threshold = envelope_service.m_bar(2, 10.0, 1.0, 11.0)
    assert threshold.m_bar == pytest.approx(22.8, abs=0.1)
    assert threshold.rate_bits == pytest.approx(math.log2(threshold.m_bar) / 2.0)


def test_envelope_on_or_above_the_boundary_is_the_tradeoff(envelope_service, tradeoff_service):
    boundary = envelope_service.envelope_endpoints(1.0, N, SIGMA2, THETA2)
    beta = min(0.5, 10.0 * boundary.beta0)
    solution = envelope_service.f_envelope(N, 1.0, SIGMA2, THETA2, beta)
    exact = tradeoff_service.f_exact(TestParams(n=N, gamma=1.0, sigma2=SIGMA2, theta2=THETA2), beta)
    assert solution.on_boundary_or_above
    assert solution.lambda_ == 1.0
    assert solution.value == pytest.approx(exact.value, rel=1e-12)


def test_envelope_below_the_boundary_is_a_chord(envelope_service, tradeoff_service):
    upsilon = 1.0
    boundary = envelope_service.envelope_endpoints(upsilon, N, SIGMA2, THETA2)
    beta = 1e-2 * boundary.beta0
    solution = envelope_service.f_envelope(N, upsilon, SIGMA2, THETA2, beta)
    exact = tradeoff_service.f_exact(TestParams(n=N, gamma=upsilon, sigma2=SIGMA2, theta2=THETA2), beta)

    assert not solution.on_boundary_or_above
    assert solution.gamma0 > upsilon
    assert solution.lambda_ * solution.gamma0 == pytest.approx(upsilon, rel=1e-12)
    mixed_beta = solution.lambda_ * solution.beta0 + (1.0 - solution.lambda_) * solution.bar_beta
    assert mixed_beta == pytest.approx(beta, rel=1e-9)
    assert solution.value < exact.value * (1.0 - 1e-12)


def test_optimal_input_meets_the_power_budget(envelope_service):
    boundary = envelope_service.envelope_endpoints(1.0, N, SIGMA2, THETA2)
    mixture = envelope_service.optimal_input(N, 1.0, SIGMA2, THETA2, 1e-2 * boundary.beta0)
    assert mixture.origin_mass + mixture.shell_mass == pytest.approx(1.0)
    assert mixture.shell_mass * mixture.shell_energy == pytest.approx(1.0, rel=1e-12)
    above = envelope_service.optimal_input(N, 1.0, SIGMA2, THETA2, 0.5)
    assert above.origin_mass == 0.0
    assert above.shell_energy == 1.0


def test_boundary_table_reports_failed_rows(envelope_service, mocker):
    warning = mocker.patch("services.envelope_services.logger.warning")
    rows = envelope_service.boundary_table(N, SIGMA2, THETA2, [0.0, 1.0, 2.0])
    assert rows[0].boundary is None
    assert rows[0].error.startswith("DomainException")
    assert [row.boundary.gamma for row in rows[1:]] == [1.0, 2.0]
    warning.assert_called_once()


@pytest.mark.slow
def test_envelope_is_convex_in_power(envelope_service, tradeoff_service):
    beta = 1e-4
    gammas = np.linspace(0.5, 4.0, 8)
    values = [envelope_service.f_envelope(N, float(g), SIGMA2, THETA2, beta).value for g in gammas]
    for a, b, c in zip(values, values[1:], values[2:]):
        assert b <= 0.5 * (a + c) + 1e-9
    for gamma, value in zip(gammas, values):
        exact = tradeoff_service.f_exact(TestParams(n=N, gamma=float(gamma), sigma2=SIGMA2, theta2=THETA2), beta)
        assert value <= exact.value + 1e-12


def test_boundary_at_high_power_stays_cheap(envelope_service, mocker):
    fraction = mocker.spy(special_functions, "_log_upper_fraction")
    boundary = envelope_service.envelope_endpoints(40.0, 2, 1.0, 11.0)
    assert 0.0 < boundary.beta0 < 1.0
    assert all(terms < 500 for _, terms in fraction.spy_return_list)


def _hull_of_sampled_tradeoffs(upsilon, beta, gamma0):
    """Lowest mixture of sampled (beta, alpha) points over a power grid meeting both budgets."""
    g_max = max(4.0, 1.2 * gamma0)
    gammas = np.unique(np.concatenate([np.linspace(0.0, g_max, 41), [upsilon, gamma0]]))
    betas, alphas, powers = [], [], []
    for gamma in gammas:
        params = TestParams(n=N, gamma=float(gamma), sigma2=SIGMA2, theta2=THETA2)
        top = params.theta * (math.sqrt(N * gamma) * params.theta / params.delta + math.sqrt(N) + 12.0)
        t = np.geomspace(1e-3, top, 400)
        betas.append(np.exp(log_beta_pair(params, t)[0]))
        alphas.append(np.exp(log_alpha_pair(params, t)[0]))
        powers.append(np.full(t.size, gamma))
    betas, alphas, powers = np.concatenate(betas), np.concatenate(alphas), np.concatenate(powers)
    solution = optimize.linprog(
        alphas,
        A_eq=np.vstack([np.ones_like(betas), betas / beta, powers / upsilon]),
        b_eq=np.ones(3),
        bounds=(0.0, None),
        method="highs",
    )
    assert solution.success
    return solution.fun


@pytest.mark.parametrize("upsilon, beta", [(1.0, 1e-3), (1.0, 0.05), (2.0, 1e-4), (0.5, 1e-2), (1.0, 0.5)])
def test_envelope_matches_the_hull_of_sampled_tradeoffs(envelope_service, upsilon, beta):
    solution = envelope_service.f_envelope(N, upsilon, SIGMA2, THETA2, beta)
    hull = _hull_of_sampled_tradeoffs(upsilon, beta, solution.gamma0)
    assert solution.value <= hull + 1e-6
    assert hull <= solution.value + 2e-3
