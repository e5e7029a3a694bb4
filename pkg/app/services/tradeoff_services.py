import logging
import math
from typing import Literal, Optional, Tuple
import numpy as np
from scipy import optimize
from scipy import special as sc
from core.special_functions import log_iv, log_marcum_q_density, log_marcum_q_pair, log_signed_sum
from exceptions.numeric_exceptions import DomainException, NoConvergenceException
from schemas.models import FDerivatives, LogValue, TestParams, TradeoffPoint
from services.base_service import Service

logger = logging.getLogger(__name__)

NonParametricMode = Literal["exact-max", "verdu-han", "fixed-t"]

_SCAN_POINTS = 81
_PENALTY = 1e300


def resolve_log_beta(beta: Optional[float], log_beta: Optional[float]) -> float:
    if log_beta is not None:
        if log_beta > 0:
            raise DomainException(f"log beta must be <= 0, got {log_beta}")
        return float(log_beta)
    if beta is None or not 0.0 <= beta <= 1.0:
        raise DomainException(f"beta must lie in [0, 1], got {beta}")
    return math.log(beta) if beta > 0 else -math.inf


def alpha_noncentrality(params: TestParams) -> float:
    return math.sqrt(params.n * params.gamma) * params.sigma / params.delta


def beta_noncentrality(params: TestParams) -> float:
    return math.sqrt(params.n * params.gamma) * params.theta / params.delta


def log_alpha_pair(params: TestParams, t) -> Tuple[np.ndarray, np.ndarray]:
    """(ln alpha, ln(1 - alpha)) along an array of thresholds."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    return log_marcum_q_pair(0.5 * params.n, alpha_noncentrality(params), t / params.sigma)


def log_beta_pair(params: TestParams, t) -> Tuple[np.ndarray, np.ndarray]:
    """(ln beta, ln(1 - beta)) along an array of thresholds."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    log_q, log_p = log_marcum_q_pair(0.5 * params.n, beta_noncentrality(params), t / params.theta)
    return log_p, log_q


def log_beta_slope(params: TestParams, t) -> np.ndarray:
    """ln(d beta / dt)."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    return (
        log_marcum_q_density(0.5 * params.n, beta_noncentrality(params), t / params.theta)
        - math.log(params.theta)
    )


def t_prime(params: TestParams, t):
    """Log-likelihood-ratio threshold matching the parametric threshold t."""
    return (
        0.5 * params.n * math.log(params.theta2 / params.sigma2)
        + 0.5 * params.n * params.gamma / params.delta
        - params.delta * np.square(t) / (2.0 * params.sigma2 * params.theta2)
    )


def decision_sphere(upsilon: float, sigma2: float, n: int, t: float) -> Tuple[float, float]:
    """Center scale and squared radius of the decision region at theta2 = upsilon + sigma2.

    A negative radius2 is returned unchanged and stands for an empty region.
    """
    ratio = sigma2 / upsilon
    radius2 = n * sigma2 * (1.0 + ratio) * (1.0 - 2.0 * t / n + math.log(1.0 + upsilon / sigma2))
    return 1.0 + ratio, radius2


class TradeoffService(Service):
    """Type-I/type-II trade-off f(beta, gamma) of the Gaussian test and its derivatives."""

    def tradeoff_at(self, params: TestParams, t: float) -> TradeoffPoint:
        if t < 0:
            raise DomainException(f"threshold must be nonnegative, got {t}")
        log_alpha = float(log_alpha_pair(params, t)[0][0])
        log_beta = float(log_beta_pair(params, t)[0][0])
        return TradeoffPoint(
            t=t,
            t_prime=float(t_prime(params, t)),
            alpha=math.exp(log_alpha),
            beta=math.exp(log_beta),
            log_alpha=log_alpha,
            log_beta=log_beta,
        )

    def solve_t_for_beta(
        self, params: TestParams, beta: Optional[float] = None, *, log_beta: Optional[float] = None
    ) -> float:
        target = resolve_log_beta(beta, log_beta)
        if not -math.inf < target < 0:
            raise DomainException("beta must lie strictly inside (0, 1)")
        return self.__newton_in_log_t(params, target)

    def f_exact(
        self, params: TestParams, beta: Optional[float] = None, *, log_beta: Optional[float] = None
    ) -> LogValue:
        target = resolve_log_beta(beta, log_beta)
        if target == 0.0:
            return LogValue(log_magnitude=-math.inf)
        if target == -math.inf:
            return LogValue(log_magnitude=0.0)
        t_star = self.__newton_in_log_t(params, target)
        return LogValue(log_magnitude=float(log_alpha_pair(params, t_star)[0][0]))

    def f_nonparametric(
        self,
        params: TestParams,
        beta: Optional[float] = None,
        *,
        log_beta: Optional[float] = None,
        mode: NonParametricMode = "exact-max",
        t: Optional[float] = None,
    ) -> LogValue:
        target = resolve_log_beta(beta, log_beta)
        if not -math.inf < target < 0:
            raise DomainException("beta must lie strictly inside (0, 1)")
        if mode == "fixed-t":
            if t is None or t < 0:
                raise DomainException("fixed-t mode needs a threshold t >= 0")
            sign, value = self.__objective(params, target, np.array([t]), mode)
            return LogValue(log_magnitude=float(value[0]) if sign[0] > 0 else -math.inf)

        t_lo, t_hi = self.__beta_bracket(params, target)
        grid = np.geomspace(t_lo / 100.0, t_hi * 4.0, _SCAN_POINTS)
        signs, values = self.__objective(params, target, grid, mode)
        keys = np.where(signs > 0, values, -np.inf)
        best = int(np.argmax(keys))
        if not np.isfinite(keys[best]):
            logger.debug(f"non-parametric objective ({mode}) is nonpositive on the scan")
            return LogValue(log_magnitude=-math.inf)

        u_grid = np.log(grid)
        left = u_grid[max(best - 1, 0)]
        right = u_grid[min(best + 1, grid.size - 1)]

        def negative_key(u: float) -> float:
            sign, value = self.__objective(params, target, np.array([math.exp(u)]), mode)
            return -float(value[0]) if sign[0] > 0 else _PENALTY

        refined = optimize.minimize_scalar(
            negative_key, bounds=(left, right), method="bounded", options={"xatol": 1e-12}
        )
        return LogValue(log_magnitude=max(float(keys[best]), -float(refined.fun)))

    def f_derivatives(
        self, params: TestParams, beta: Optional[float] = None, *, log_beta: Optional[float] = None
    ) -> FDerivatives:
        target = resolve_log_beta(beta, log_beta)
        if not -math.inf < target < 0:
            raise DomainException("beta must lie strictly inside (0, 1)")
        t = self.__newton_in_log_t(params, target)
        if params.gamma == 0.0:
            return self.__derivatives_at_origin(params, t)
        return self.__derivatives(params, t)

    def __derivatives(self, params: TestParams, t: float) -> FDerivatives:
        n, gamma, sigma2, theta2, delta = params.n, params.gamma, params.sigma2, params.theta2, params.delta
        m = 0.5 * n
        x = math.sqrt(n * gamma) * t / delta
        log_i_m = float(log_iv(m, x)[0])
        log_i_m1 = float(log_iv(m - 1.0, x)[0])
        ratio = math.exp(log_i_m - log_i_m1)

        df_dgamma = -math.exp(
            math.log(n / (2.0 * delta))
            + m * math.log(t * delta / (sigma2 * math.sqrt(n * gamma)))
            - 0.5 * (n * gamma * sigma2 / delta**2 + t * t / sigma2)
            + log_i_m
        )
        tp = float(t_prime(params, t))
        df_dbeta = -math.exp(tp)
        curvature = delta / (sigma2 * theta2)
        dt_dgamma = theta2 / (2.0 * delta) * math.sqrt(n / gamma) * ratio
        d2f_dbeta_dgamma = df_dbeta * (n / (2.0 * delta) - t * curvature * dt_dgamma)
        log_dt_dbeta = -float(log_beta_slope(params, t)[0])
        d2f_dbeta2 = math.exp(math.log(t) + tp + math.log(curvature) + log_dt_dbeta)
        d2f_dgamma2 = 0.5 * df_dgamma * (
            n / delta
            - n / gamma
            + math.sqrt(n / gamma) * (t / delta) * (1.0 / ratio - (theta2 / sigma2) * ratio)
        )
        return FDerivatives(
            t=t,
            df_dgamma=df_dgamma,
            df_dbeta=df_dbeta,
            d2f_dbeta_dgamma=d2f_dbeta_dgamma,
            d2f_dbeta2=d2f_dbeta2,
            d2f_dgamma2=d2f_dgamma2,
            at_origin=False,
        )

    def __derivatives_at_origin(self, params: TestParams, t: float) -> FDerivatives:
        n, sigma2, theta2, delta = params.n, params.sigma2, params.theta2, params.delta
        m = 0.5 * n
        log_chi = n * math.log(t / params.sigma) - m * math.log(2.0) - t * t / (2.0 * sigma2)
        df_dgamma = -math.exp(log_chi - sc.gammaln(m)) / delta
        log_slope = n * math.log(params.theta / params.sigma) - t * t * delta / (2.0 * sigma2 * theta2)
        df_dbeta = -math.exp(log_slope)
        d2f_dbeta_dgamma = df_dbeta * (n / (2.0 * delta) - t * t / (2.0 * delta * sigma2))
        d2f_dbeta2 = math.exp(
            n * math.log(params.theta / params.sigma)
            + (n - 2) * math.log(params.theta * math.sqrt(2.0) / t)
            + math.log(delta / sigma2)
            + sc.gammaln(m)
            - t * t * (delta - sigma2) / (2.0 * theta2 * sigma2)
        )
        d2f_dgamma2 = -(n / (4.0 * delta)) * (
            n / delta + (n / (n + 2.0) - theta2 / sigma2) * t * t / delta**2
        ) * math.exp(log_chi - sc.gammaln(m + 1.0))
        return FDerivatives(
            t=t,
            df_dgamma=df_dgamma,
            df_dbeta=df_dbeta,
            d2f_dbeta_dgamma=d2f_dbeta_dgamma,
            d2f_dbeta2=d2f_dbeta2,
            d2f_dgamma2=d2f_dgamma2,
            at_origin=True,
        )

    def __objective(
        self, params: TestParams, target: float, t: np.ndarray, mode: NonParametricMode
    ) -> Tuple[np.ndarray, np.ndarray]:
        log_alpha = log_alpha_pair(params, t)[0]
        tp = t_prime(params, t)
        signs = np.empty_like(t)
        values = np.empty_like(t)
        if mode == "verdu-han":
            log_beta_t = np.full_like(t, -np.inf)
        else:
            log_beta_t = log_beta_pair(params, t)[0]
        for i in range(t.size):
            diff_sign, log_diff = log_signed_sum([log_beta_t[i], target], [1.0, -1.0])
            signs[i], values[i] = log_signed_sum([log_alpha[i], tp[i] + log_diff], [1.0, diff_sign])
        return signs, values

    def __beta_bracket(self, params: TestParams, target: float) -> Tuple[float, float]:
        """Thresholds t_lo < t_hi with beta(t_lo) < beta <= beta(t_hi)."""
        t_hi = params.theta * max(1.0, beta_noncentrality(params) + math.sqrt(params.n))
        for _ in range(self.settings.T_SOLVER_MAX_ITER * 5):
            if float(log_beta_pair(params, t_hi)[0][0]) >= target:
                break
            t_hi *= 2.0
        else:
            raise NoConvergenceException("could not bracket beta from above", (0.0, t_hi))
        t_lo = t_hi
        for _ in range(self.settings.T_SOLVER_MAX_ITER * 5):
            t_lo *= 0.5
            if float(log_beta_pair(params, t_lo)[0][0]) < target:
                break
            if t_lo < 1e-300:
                raise NoConvergenceException("could not bracket beta from below", (0.0, t_hi))
        return t_lo, t_hi

    def __newton_in_log_t(self, params: TestParams, target: float) -> float:
        """Safeguarded Newton on ln beta(e^u) = target, falling back to bisection."""
        t_lo, t_hi = self.__beta_bracket(params, target)
        u_lo, u_hi = math.log(t_lo), math.log(t_hi)
        u = 0.5 * (u_lo + u_hi)
        for iteration in range(self.settings.T_SOLVER_MAX_ITER):
            t = math.exp(u)
            residual = float(log_beta_pair(params, t)[0][0]) - target
            if abs(residual) <= self.settings.T_SOLVER_RTOL:
                logger.debug(f"threshold solve converged in {iteration + 1} steps, t={t}")
                return t
            if residual < 0:
                u_lo = u
            else:
                u_hi = u
            if math.exp(u_hi) - math.exp(u_lo) <= self.settings.T_SOLVER_ATOL:
                return t
            log_slope = float(log_beta_slope(params, t)[0])
            log_beta_t = residual + target
            step_scale = math.exp(u + log_slope - log_beta_t) if math.isfinite(log_slope) else 0.0
            candidate = u - residual / step_scale if step_scale > 0 else math.nan
            if not u_lo < candidate < u_hi:
                candidate = 0.5 * (u_lo + u_hi)
            u = candidate
        raise NoConvergenceException(
            f"threshold solve exceeded {self.settings.T_SOLVER_MAX_ITER} iterations",
            (math.exp(u_lo), math.exp(u_hi)),
        )
