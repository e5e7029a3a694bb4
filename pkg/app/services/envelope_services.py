"""Convex envelope of f(beta, gamma) in gamma for the average power constraint.

Above the boundary beta >= beta0(gamma) the envelope coincides with f. Below
it the envelope is the chord between the origin point (bar_beta, 0) and the
boundary point (beta0(gamma0), gamma0) whose weights meet the power budget.
"""

import logging
import math
from typing import Iterable, List, Optional, Tuple
import numpy as np
from scipy import optimize
from scipy import special as sc
from core.config import DevSettings, settings as default_settings
from core.special_functions import log_iv, log_marcum_q_pair
from exceptions.numeric_exceptions import (
    DomainException,
    NoBracketException,
    NoConvergenceException,
    NoRootException,
)
from schemas.models import (
    BoundaryRow,
    CardinalityThreshold,
    EnvelopeBoundary,
    EnvelopeSolution,
    InputMixture,
    TestParams,
)
from services.base_service import Service
from services.tradeoff_services import (
    TradeoffService,
    log_alpha_pair,
    log_beta_pair,
    resolve_log_beta,
    t_prime,
)

logger = logging.getLogger(__name__)

# relative size of the xi sum below which the sign carries no information
_INDETERMINATE = 1e-10
_SCAN_CHUNK = 1000
_SIGNS = np.array([1.0, -1.0, 1.0, -1.0, 1.0])[:, None]


def _boundary_params(n: int, gamma: float, sigma2: float, theta2: float) -> TestParams:
    if gamma <= 0:
        raise DomainException(f"the envelope boundary needs gamma > 0, got {gamma}")
    return TestParams(n=n, gamma=gamma, sigma2=sigma2, theta2=theta2)


def _clamped_root(x: np.ndarray) -> np.ndarray:
    return np.sqrt(np.maximum(x, 0.0))


def _difference(log_a, log_a_c, log_b, log_b_c) -> Tuple[np.ndarray, np.ndarray]:
    """Positive and negative log terms of a - b for probabilities with known complements.

    a - b is also (1 - b) - (1 - a); whichever pair has the smaller leading
    term is kept so the subtraction loses as few digits as possible.
    """
    use_upper = np.maximum(log_a, log_b) <= np.maximum(log_a_c, log_b_c)
    return np.where(use_upper, log_a, log_b_c), np.where(use_upper, log_b, log_a_c)


def xi_log_terms(params: TestParams, t) -> np.ndarray:
    """Log magnitudes, shape (5, len(t)), of the terms whose signed sum is xi1 + xi2 + xi3.

    Row order is +xi1, -xi1, +xi2, -xi2, +xi3 (signs in ``_SIGNS``).
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    m = 0.5 * params.n
    n_gamma = params.n * params.gamma
    delta = params.delta

    log_a1, log_a1_c = log_alpha_pair(params, t)
    log_b1, log_b1_c = log_marcum_q_pair(
        m, 0.0, _clamped_root(t * t / params.sigma2 - n_gamma * params.theta2 / delta**2)
    )
    log_b2, log_b2_c = log_marcum_q_pair(
        m, 0.0, _clamped_root(t * t / params.theta2 - n_gamma * params.sigma2 / delta**2)
    )
    log_a2_c, log_a2 = log_beta_pair(params, t)
    plus1, minus1 = _difference(log_a1, log_a1_c, log_b1, log_b1_c)
    plus2, minus2 = _difference(log_b2, log_b2_c, log_a2, log_a2_c)
    log_scale = t_prime(params, t)

    log_xi3 = np.full_like(t, -np.inf)
    positive = t > 0
    tp = t[positive]
    log_xi3[positive] = (
        math.log(n_gamma / (2.0 * delta))
        + m * np.log(tp * delta / (params.sigma2 * math.sqrt(n_gamma)))
        - 0.5 * (n_gamma * params.sigma2 / delta**2 + tp * tp / params.sigma2)
        + log_iv(m, math.sqrt(n_gamma) * tp / delta)
    )
    return np.vstack([plus1, minus1, log_scale + plus2, log_scale + minus2, log_xi3])


def xi_ratio(params: TestParams, t) -> np.ndarray:
    """(xi1 + xi2 + xi3) divided by the sum of the absolute values of its terms."""
    log_terms = xi_log_terms(params, t)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        log_sum, sign = sc.logsumexp(log_terms, axis=0, b=_SIGNS, return_sign=True)
        log_total = sc.logsumexp(log_terms, axis=0)
        ratio = sign * np.exp(log_sum - log_total)
    return np.where(np.isfinite(log_total), ratio, 0.0)


class EnvelopeService(Service):
    """Boundary, cardinality threshold and chord construction of the envelope."""

    def __init__(self, settings: DevSettings = default_settings):
        super().__init__(settings)
        self.tradeoff = TradeoffService(settings)

    def xi_terms(
        self, t: float, gamma: float, n: int, sigma2: float, theta2: float
    ) -> Tuple[float, float, float]:
        if t < 0:
            raise DomainException(f"threshold must be nonnegative, got {t}")
        params = _boundary_params(n, gamma, sigma2, theta2)
        terms = np.exp(xi_log_terms(params, t)[:, 0])
        return terms[0] - terms[1], terms[2] - terms[3], terms[4]

    def solve_t0(self, gamma: float, n: int, sigma2: float, theta2: float) -> float:
        return self.__solve_t0(_boundary_params(n, gamma, sigma2, theta2))[0]

    def envelope_endpoints(self, gamma: float, n: int, sigma2: float, theta2: float) -> EnvelopeBoundary:
        return self.__boundary(_boundary_params(n, gamma, sigma2, theta2))

    def m_bar(self, n: int, upsilon: float, sigma2: float, theta2: float) -> CardinalityThreshold:
        boundary = self.__boundary(_boundary_params(n, upsilon, sigma2, theta2))
        log_m_bar = -boundary.log_beta0
        return CardinalityThreshold(
            n=n,
            m_bar=math.exp(log_m_bar) if log_m_bar < 709.0 else math.inf,
            log_m_bar=log_m_bar,
            rate_bits=log_m_bar / (n * math.log(2.0)),
        )

    def f_envelope(
        self,
        n: int,
        upsilon: float,
        sigma2: float,
        theta2: float,
        beta: Optional[float] = None,
        *,
        log_beta: Optional[float] = None,
    ) -> EnvelopeSolution:
        target = resolve_log_beta(beta, log_beta)
        if not -math.inf < target < 0:
            raise DomainException("beta must lie strictly inside (0, 1)")
        params = _boundary_params(n, upsilon, sigma2, theta2)
        boundary = self.__boundary(params)
        warnings = self.__root_warnings(boundary)

        if target >= boundary.log_beta0:
            value = self.tradeoff.f_exact(params, log_beta=target)
            return EnvelopeSolution(
                t0=boundary.t0,
                gamma0=upsilon,
                beta0=boundary.beta0,
                bar_t_star=boundary.bar_t_star,
                bar_beta=boundary.bar_beta,
                lambda_=1.0,
                value=value.value,
                log_value=value.log_magnitude,
                on_boundary_or_above=True,
                warnings=warnings,
            )

        shell, chord_warnings = self.__solve_gamma0(params, target, boundary)
        warnings.extend(chord_warnings)
        lam = upsilon / shell.gamma
        shell_params = params.with_gamma(shell.gamma)
        log_shell = float(log_alpha_pair(shell_params, shell.t0)[0][0])
        log_origin = float(log_alpha_pair(params.with_gamma(0.0), shell.bar_t_star)[0][0])
        log_value = float(
            sc.logsumexp([math.log(lam) + log_shell, math.log1p(-lam) + log_origin])
        )
        return EnvelopeSolution(
            t0=shell.t0,
            gamma0=shell.gamma,
            beta0=shell.beta0,
            bar_t_star=shell.bar_t_star,
            bar_beta=shell.bar_beta,
            lambda_=lam,
            value=math.exp(log_value),
            log_value=log_value,
            on_boundary_or_above=False,
            warnings=warnings,
        )

    def optimal_input(
        self,
        n: int,
        upsilon: float,
        sigma2: float,
        theta2: float,
        beta: Optional[float] = None,
        *,
        log_beta: Optional[float] = None,
    ) -> InputMixture:
        solution = self.f_envelope(n, upsilon, sigma2, theta2, beta, log_beta=log_beta)
        if solution.on_boundary_or_above:
            return InputMixture(origin_mass=0.0, shell_energy=upsilon, shell_mass=1.0)
        return InputMixture(
            origin_mass=1.0 - solution.lambda_,
            shell_energy=solution.gamma0,
            shell_mass=solution.lambda_,
        )

    def boundary_table(
        self, n: int, sigma2: float, theta2: float, gammas: Iterable[float]
    ) -> List[BoundaryRow]:
        rows = []
        for gamma in gammas:
            try:
                rows.append(
                    BoundaryRow(gamma=gamma, boundary=self.envelope_endpoints(gamma, n, sigma2, theta2))
                )
            except (DomainException, NoRootException, NoConvergenceException) as exc:
                logger.warning(f"boundary at gamma={gamma} failed: {exc}")
                rows.append(BoundaryRow(gamma=gamma, error=f"{type(exc).__name__}: {exc}"))
        return rows

    def __root_warnings(self, boundary: EnvelopeBoundary) -> List[str]:
        if boundary.roots > 1:
            return [f"xi sum has {boundary.roots} roots at gamma={boundary.gamma}; smallest kept"]
        return []

    def __boundary(self, params: TestParams) -> EnvelopeBoundary:
        t0, roots = self.__solve_t0(params)
        log_beta0 = float(log_beta_pair(params, t0)[0][0])
        bar_t_star = math.sqrt(
            max(t0 * t0 - params.n * params.gamma * params.sigma2 * params.theta2 / params.delta**2, 0.0)
        )
        log_bar_beta = float(log_beta_pair(params.with_gamma(0.0), bar_t_star)[0][0])
        return EnvelopeBoundary(
            gamma=params.gamma,
            t0=t0,
            beta0=math.exp(log_beta0),
            log_beta0=log_beta0,
            bar_t_star=bar_t_star,
            bar_beta=math.exp(log_bar_beta),
            log_bar_beta=log_bar_beta,
            roots=roots,
        )

    def __solve_t0(self, params: TestParams) -> Tuple[float, int]:
        """Smallest t where the xi sum turns from negative to nonnegative.

        The sum is also positive next to t = 0, where the leading terms of
        xi1 and xi2 cancel; that stretch is not a boundary and is skipped.
        The scan stops one chunk after the first crossing.
        """
        t_min = self.settings.T0_GRID_MIN_FACTOR * params.theta
        t_max = self.settings.T0_GRID_MAX_FACTOR * params.theta * math.sqrt(params.n)
        grid = np.geomspace(t_min, t_max, self.settings.T0_GRID_POINTS)

        crossings: List[Tuple[float, float]] = []
        last_t, last_negative = None, None
        chunks_after_crossing = 0
        for start in range(0, grid.size, _SCAN_CHUNK):
            chunk = grid[start : start + _SCAN_CHUNK]
            ratio = xi_ratio(params, chunk)
            for t, r in zip(chunk, ratio):
                if abs(r) < _INDETERMINATE:
                    continue
                negative = r < 0
                if last_negative and not negative:
                    crossings.append((last_t, float(t)))
                last_t, last_negative = float(t), negative
            if crossings:
                chunks_after_crossing += 1
                if chunks_after_crossing > 1:
                    break

        if not crossings:
            raise NoRootException(
                f"xi sum never turns nonnegative on [{t_min}, {t_max}] "
                f"(n={params.n}, gamma={params.gamma}, theta2={params.theta2})",
                (t_min, t_max),
            )
        if len(crossings) > 1:
            logger.warning(
                f"xi sum changes sign {len(crossings)} times at gamma={params.gamma}, keeping the smallest root"
            )
        left, right = crossings[0]
        t0 = optimize.brentq(
            lambda t: float(xi_ratio(params, t)[0]),
            left,
            right,
            xtol=self.settings.T0_ABS_TOL,
            rtol=4.0 * np.finfo(float).eps,
            maxiter=self.settings.T_SOLVER_MAX_ITER,
        )
        logger.debug(f"t0={t0} for gamma={params.gamma} from bracket [{left}, {right}]")
        return float(t0), len(crossings)

    def __chord(self, params: TestParams, gamma0: float) -> Tuple[float, EnvelopeBoundary]:
        shell = self.__boundary(params.with_gamma(gamma0))
        lam = params.gamma / gamma0
        log_chord = sc.logsumexp(
            [math.log(lam) + shell.log_beta0, math.log1p(-lam) + shell.log_bar_beta]
        )
        return float(log_chord), shell

    def __solve_gamma0(
        self, params: TestParams, target: float, boundary: EnvelopeBoundary
    ) -> Tuple[EnvelopeBoundary, List[str]]:
        """Shell energy gamma0 >= upsilon whose chord passes through beta."""
        upsilon = params.gamma
        cap = self.settings.GAMMA0_MAX_FACTOR * upsilon
        history = [(upsilon, boundary.log_beta0)]
        high = 4.0 * upsilon
        while True:
            log_chord, _ = self.__chord(params, high)
            history.append((high, log_chord))
            if log_chord <= target:
                break
            if high >= cap:
                raise NoBracketException(
                    f"chord beta stays above {math.exp(target)} up to gamma0={high}", (upsilon, high)
                )
            high = min(2.0 * high, cap)

        def offset(log_gamma0: float) -> float:
            return self.__chord(params, math.exp(log_gamma0))[0] - target

        warnings: List[str] = []
        if all(b[1] < a[1] for a, b in zip(history, history[1:])):
            low = history[-2][0]
        else:
            message = f"chord beta is not monotone in gamma0 for beta={math.exp(target)}; dense scan used"
            logger.warning(message)
            warnings.append(message)
            low = upsilon
            for gamma0 in np.geomspace(upsilon, high, self.settings.GAMMA0_SCAN_POINTS)[1:]:
                if offset(math.log(gamma0)) <= 0:
                    high = float(gamma0)
                    break
                low = float(gamma0)
        # offset is positive at low (at gamma0 = upsilon it is log beta0 - log beta)
        log_gamma0 = optimize.brentq(offset, math.log(low), math.log(high), xtol=1e-13, rtol=1e-13)
        _, shell = self.__chord(params, math.exp(log_gamma0))
        logger.debug(f"gamma0={shell.gamma} for beta={math.exp(target)}")
        return shell, warnings
