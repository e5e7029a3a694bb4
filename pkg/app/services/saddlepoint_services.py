import logging
import math
from typing import Callable, Dict, Literal, Optional, Tuple
import numpy as np
from scipy import optimize
from core.config import DevSettings, settings as default_settings
from core.special_functions import log_signed_sum, psi_stable
from exceptions.numeric_exceptions import DomainException, NoConvergenceException
from schemas.models import ExponentReport, SaddlepointResult, SaddlepointState, TestParams
from services.base_service import Service
from services.tradeoff_services import resolve_log_beta

logger = logging.getLogger(__name__)

Variant = Literal["full", "hat"]

_SQRT_2PI = math.sqrt(2.0 * math.pi)
_PENALTY = 1e300
_EDGE = 1e-9


def _sgn(x: float) -> float:
    return -1.0 if x < 0 else 1.0


def kappa_set(s: float, gamma: float, sigma2: float, theta2: float) -> SaddlepointState:
    """Cumulant generating function of the log-likelihood ratio and its first three derivatives."""
    delta = theta2 - sigma2
    eta = s * theta2 + (1.0 - s) * sigma2
    if eta <= 0:
        raise DomainException(f"eta(s) = {eta} must be positive (s={s})")
    kappa = gamma * s * (s - 1.0) / (2.0 * eta) + 0.5 * (
        s * math.log(theta2) + (1.0 - s) * math.log(sigma2) - math.log(eta)
    )
    dkappa = (
        gamma * (s * s * theta2 - (1.0 - s) ** 2 * sigma2) / (2.0 * eta * eta)
        - delta / (2.0 * eta)
        + 0.5 * math.log(theta2 / sigma2)
    )
    d2kappa = gamma * theta2 * sigma2 / eta**3 + delta * delta / (2.0 * eta * eta)
    d3kappa = -(3.0 * gamma * theta2 * sigma2 * delta / eta**4 + delta**3 / (2.0 * eta**3))
    return SaddlepointState(
        s=s,
        kappa=kappa,
        dkappa=dkappa,
        d2kappa=d2kappa,
        d3kappa=d3kappa,
        eta=eta,
        lambda_a=0.0,
        lambda_b=0.0,
    )


def theta_tilde(s: float, gamma: float, sigma2: float) -> float:
    """Variance of the exponent-achieving zero-mean output distribution for tilt s."""
    if s <= 0:
        raise DomainException(f"theta_tilde needs s > 0, got {s}")
    shift = 0.5 * gamma - sigma2 / (2.0 * s)
    root = math.sqrt(shift * shift + gamma * sigma2)
    if shift < 0:
        return sigma2 + gamma * sigma2 / (root - shift)
    return sigma2 + shift + root


def augustin_capacity(s: float, upsilon: float, sigma2: float) -> float:
    if s == 1.0:
        return 0.5 * math.log(1.0 + upsilon / sigma2)
    theta2 = theta_tilde(s, upsilon, sigma2)
    eta = s * theta2 + (1.0 - s) * sigma2
    return s * upsilon / (2.0 * eta) + (
        0.5 * s * math.log(theta2) + 0.5 * (1.0 - s) * math.log(sigma2) - 0.5 * math.log(eta)
    ) / (s - 1.0)


def corrections(state: SaddlepointState, n: int, variant: Variant) -> SaddlepointState:
    """Attach lambda_a, lambda_b and the a, b factors of the uniform expansion."""
    s = state.s
    u = 1.0 - s
    r = math.sqrt(n * state.d2kappa)
    lambda_a = abs(u) * r
    lambda_b = abs(s) * r
    psi_a = psi_stable(lambda_a)
    psi_b = psi_stable(lambda_b)
    a_corr = _sgn(u) * psi_a
    b_corr = _sgn(s) * psi_b
    if variant == "full":
        # the lambda^-1 - lambda^-3 terms are multiplied out so that s = 0 and s = 1 stay finite
        a_term = (-u * abs(u) / r + _sgn(u) / r**3) / _SQRT_2PI + u**3 * psi_a
        b_term = (s * abs(s) / r - _sgn(s) / r**3) / _SQRT_2PI - s**3 * psi_b
        a_corr += _sgn(u) * n / 6.0 * a_term * state.d3kappa
        b_corr += _sgn(s) * n / 6.0 * b_term * state.d3kappa
    return state.model_copy(
        update={"lambda_a": lambda_a, "lambda_b": lambda_b, "a_corr": a_corr, "b_corr": b_corr}
    )


def saddlepoint_objective(state: SaddlepointState, n: int, log_beta: float) -> Tuple[float, float]:
    """Signed log of the expansion objective at one value of s."""
    s = state.s
    ab = state.a_corr + state.b_corr
    log_terms = [
        math.log(abs(ab)) + n * (state.kappa + (1.0 - s) * state.dkappa) if ab != 0 else -math.inf
    ]
    signs = [_sgn(ab)]
    if s > 1.0:
        log_terms.append(0.0)
        signs.append(1.0)
    if s < 0.0:
        log_weight = math.log(-math.expm1(log_beta)) if log_beta < 0 else -math.inf
        signs.append(1.0)
    else:
        log_weight = log_beta
        signs.append(-1.0)
    log_terms.append(log_weight + n * state.dkappa)
    return log_signed_sum(log_terms, signs)


class SaddlepointService(Service):
    """Saddlepoint approximations of f(beta, gamma) and the sphere-packing exponent."""

    def __init__(self, settings: DevSettings = default_settings):
        super().__init__(settings)
        # critical rate per (upsilon, sigma2)
        self.__critical_rates: Dict[Tuple[float, float], float] = {}

    def f_saddlepoint(
        self,
        params: TestParams,
        beta: Optional[float] = None,
        *,
        log_beta: Optional[float] = None,
        variant: Variant = "full",
    ) -> SaddlepointResult:
        target = self.__open_interval(beta, log_beta)
        left_limit = -params.sigma2 / params.delta

        def state_at(s: float) -> SaddlepointState:
            return corrections(kappa_set(s, params.gamma, params.sigma2, params.theta2), params.n, variant)

        s_star, log_value = self.__maximize(state_at, params.n, target, left_limit)
        return SaddlepointResult(
            value=math.exp(log_value),
            log_value=log_value,
            s_star=s_star,
            theta2=params.theta2,
            variant=variant,
        )

    def f_saddlepoint_exponent(
        self,
        n: int,
        gamma: float,
        sigma2: float,
        beta: Optional[float] = None,
        *,
        log_beta: Optional[float] = None,
        variant: Variant = "full",
    ) -> SaddlepointResult:
        target = self.__open_interval(beta, log_beta)

        def state_at(s: float) -> SaddlepointState:
            theta2 = theta_tilde(s, gamma, sigma2)
            return corrections(kappa_set(s, gamma, sigma2, theta2), n, variant)

        s_star, log_value = self.__maximize(state_at, n, target, 0.0)
        return SaddlepointResult(
            value=math.exp(log_value),
            log_value=log_value,
            s_star=s_star,
            theta2=theta_tilde(s_star, gamma, sigma2),
            variant=variant,
        )

    def sphere_packing(self, rate_nats: float, upsilon: float, sigma2: float) -> ExponentReport:
        if rate_nats <= 0:
            raise DomainException(f"rate must be positive, got {rate_nats}")
        capacity = augustin_capacity(1.0, upsilon, sigma2)
        critical = self.__critical_rate(upsilon, sigma2)
        if rate_nats >= capacity:
            return ExponentReport(
                rate_nats=rate_nats,
                capacity_nats=capacity,
                s_star=1.0,
                esp=0.0,
                theta_tilde2=upsilon + sigma2,
                augustin=capacity,
                critical_rate_nats=critical,
            )
        s_star, esp = self.__esp_maximizer(rate_nats, upsilon, sigma2)
        return ExponentReport(
            rate_nats=rate_nats,
            capacity_nats=capacity,
            s_star=s_star,
            esp=max(esp, 0.0),
            theta_tilde2=theta_tilde(s_star, upsilon, sigma2),
            augustin=augustin_capacity(s_star, upsilon, sigma2),
            critical_rate_nats=critical,
        )

    def exponent_curve(self, rates_nats, upsilon: float, sigma2: float):
        return [self.sphere_packing(rate, upsilon, sigma2) for rate in rates_nats]

    def __open_interval(self, beta: Optional[float], log_beta: Optional[float]) -> float:
        target = resolve_log_beta(beta, log_beta)
        if not -math.inf < target < 0:
            raise DomainException("beta must lie strictly inside (0, 1)")
        return target

    def __esp_maximizer(self, rate_nats: float, upsilon: float, sigma2: float) -> Tuple[float, float]:
        def negative(s: float) -> float:
            return -(1.0 - s) / s * (augustin_capacity(s, upsilon, sigma2) - rate_nats)

        tol = self.settings.ESP_S_TOL
        result = optimize.minimize_scalar(
            negative, bounds=(tol, 1.0 - tol), method="bounded", options={"xatol": tol}
        )
        return float(result.x), -float(result.fun)

    def __critical_rate(self, upsilon: float, sigma2: float) -> float:
        key = (upsilon, sigma2)
        if key not in self.__critical_rates:
            self.__critical_rates[key] = self.__solve_critical_rate(upsilon, sigma2)
        return self.__critical_rates[key]

    def __solve_critical_rate(self, upsilon: float, sigma2: float) -> float:
        capacity = augustin_capacity(1.0, upsilon, sigma2)

        def offset(rate: float) -> float:
            return self.__esp_maximizer(rate, upsilon, sigma2)[0] - 0.5

        return optimize.brentq(
            offset, 1e-6 * capacity, capacity * (1.0 - 1e-9), xtol=self.settings.CRITICAL_RATE_TOL
        )

    def __maximize(
        self,
        state_at: Callable[[float], SaddlepointState],
        n: int,
        log_beta: float,
        left_limit: float,
    ) -> Tuple[float, float]:
        """Grid scan then bounded Brent refinement over s, widening the bracket on edge hits."""

        def key(s: float) -> float:
            sign, value = saddlepoint_objective(state_at(s), n, log_beta)
            return value if sign > 0 else -math.inf

        lower_edge = left_limit + _EDGE * max(1.0, abs(left_limit))
        low, high = self.settings.SP_S_BRACKET
        low = max(low, lower_edge)
        for expansion in range(self.settings.SP_MAX_EXPANSIONS):
            grid = np.linspace(low, high, self.settings.SP_GRID_POINTS)
            keys = np.array([key(float(s)) for s in grid])
            best = int(np.argmax(keys))
            if not np.isfinite(keys[best]):
                raise NoConvergenceException("saddlepoint objective is nonpositive on the bracket", (low, high))
            hits_low = best == 0 and low > lower_edge
            hits_high = best == grid.size - 1
            if not (hits_low or hits_high):
                break
            logger.debug(f"saddlepoint bracket expansion {expansion + 1}: [{low}, {high}]")
            width = high - low
            if hits_low:
                low = max(low - width, lower_edge)
            if hits_high:
                high = high + width
        else:
            raise NoConvergenceException("saddlepoint bracket exhausted", (low, high))

        left = float(grid[max(best - 1, 0)])
        right = float(grid[min(best + 1, grid.size - 1)])
        def negative_key(s: float) -> float:
            value = key(s)
            return -value if np.isfinite(value) else _PENALTY

        refined = optimize.minimize_scalar(
            negative_key,
            bounds=(left, right),
            method="bounded",
            options={"xatol": 1e-10},
        )
        if -refined.fun >= keys[best]:
            return float(refined.x), -float(refined.fun)
        return float(grid[best]), float(keys[best])
