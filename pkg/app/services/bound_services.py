import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from functools import partial
from typing import Callable, List, Literal, Optional, Sequence, Tuple
import numpy as np
from scipy import integrate, optimize
from scipy import special as sc
from core.config import DevSettings, settings as default_settings
from core.special_functions import gaussian_q
from exceptions.bound_exceptions import BoundEvaluationException
from exceptions.numeric_exceptions import (
    DomainException,
    NoBracketException,
    NoConvergenceException,
    NoRootException,
    QuadratureException,
)
from exceptions.params_exceptions import InvalidParamsException
from schemas.models import BoundQuery, BoundResult, SweepRow, TestParams
from services.base_service import Service
from services.envelope_services import EnvelopeService
from services.saddlepoint_services import SaddlepointService
from services.tradeoff_services import TradeoffService, log_alpha_pair

logger = logging.getLogger(__name__)

TransformKind = Literal["equal_to_maximal_eq16", "equal_to_maximal_lemma1", "maximal_to_average"]
SweepMode = Literal["error_vs_n", "maxrate_vs_n", "error_vs_m", "mbar_vs_n"]
# (n, ln M, upsilon) -> bound
Evaluator = Callable[[int, float, float], BoundResult]

NUMERIC_ERRORS = (
    DomainException,
    NoConvergenceException,
    NoRootException,
    NoBracketException,
    QuadratureException,
)
POINT_ERRORS = (BoundEvaluationException, InvalidParamsException) + NUMERIC_ERRORS

_LN2 = math.log(2.0)
_SPLIT_GRID_POINTS = 25
_PENALTY = 1e300
_QUAD_TAIL = 40.0


def _resolve_log_m(m: Optional[float], log_m: Optional[float]) -> float:
    if log_m is not None:
        if log_m <= 0:
            raise DomainException(f"M must exceed 1, got ln M = {log_m}")
        return float(log_m)
    if m is None or m <= 1.0:
        raise DomainException(f"M must exceed 1, got {m}")
    return math.log(m)


def _m_from_log(log_m: float) -> float:
    return math.exp(log_m) if log_m < 709.0 else math.inf


def half_angle(n: int, m: float) -> float:
    """Half-angle of the cone whose cap covers a fraction 1/M of the unit sphere in R^n.

    The cap fraction of half-angle t <= pi/2 is I_{sin^2 t}((n-1)/2, 1/2) / 2;
    caps wider than a hemisphere are solved through the complement.
    """
    if n < 2:
        raise DomainException(f"cone half-angle needs n >= 2, got {n}")
    if m <= 1.0:
        raise DomainException(f"cone half-angle needs M > 1, got {m}")
    if n == 2:
        return math.pi / m
    a = 0.5 * (n - 1)
    if m >= 2.0:
        return math.asin(math.sqrt(float(sc.betaincinv(a, 0.5, 2.0 / m))))
    return math.pi - math.asin(math.sqrt(float(sc.betaincinv(a, 0.5, 2.0 * (1.0 - 1.0 / m)))))


def phi_n(n: int, theta: float, noise_var_ratio: float, abs_tol: float = 1e-9) -> float:
    """Probability that noise of per-dimension variance noise_var_ratio moves (1, ..., 1) out of the cone.

    Integrates the axial noise component u against the chi-square tail of the
    transverse component; the region u <= -sqrt(n) is outside for every angle.
    """
    if n < 2:
        raise DomainException(f"phi_n needs n >= 2, got {n}")
    if not 0.0 < theta <= 0.5 * math.pi:
        raise DomainException(f"phi_n needs a half-angle in (0, pi/2], got {theta}")
    if noise_var_ratio <= 0:
        raise DomainException(f"noise variance ratio must be positive, got {noise_var_ratio}")
    scale = math.sqrt(noise_var_ratio)
    root_n = math.sqrt(n)
    behind = gaussian_q(root_n / scale)
    if theta == 0.5 * math.pi:
        return behind

    tan2 = math.tan(theta) ** 2
    order = 0.5 * (n - 1)

    def integrand(v: float) -> float:
        axial = root_n + scale * v
        density = math.exp(-0.5 * v * v) / math.sqrt(2.0 * math.pi)
        return density * float(sc.gammaincc(order, 0.5 * axial * axial * tan2 / noise_var_ratio))

    low = -root_n / scale
    high = max(_QUAD_TAIL, low + 1.0)
    edge = (scale * math.sqrt(n - 1) / math.sqrt(tan2) - root_n) / scale
    points = [p for p in (0.0, edge) if low < p < high]
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            value, error = integrate.quad(
                integrand, low, high, points=points or None, epsabs=abs_tol, epsrel=1e-10, limit=500
            )
        except integrate.IntegrationWarning as exc:
            raise QuadratureException(f"cone integral did not converge: {exc}") from exc
    if error > abs_tol:
        raise QuadratureException(f"cone integral error estimate {error} above {abs_tol}", error)
    return min(1.0, behind + value)


def _sweep_point(
    settings: DevSettings,
    mode: SweepMode,
    template: BoundQuery,
    target_eps: Optional[float],
    point: float,
) -> List[SweepRow]:
    return BoundService(settings).sweep_point(mode, template, point, target_eps)


class BoundService(Service):
    """Named lower bounds, constraint transforms, cone packing and sweeps."""

    def __init__(self, settings: DevSettings = default_settings):
        super().__init__(settings)
        self.tradeoff = TradeoffService(settings)
        self.saddlepoint = SaddlepointService(settings)
        self.envelope = EnvelopeService(settings)

    def compute_bound(self, query: BoundQuery) -> BoundResult:
        try:
            return self.__compute(query)
        except NUMERIC_ERRORS as exc:
            raise BoundEvaluationException(f"{type(exc).__name__}: {exc}", query) from exc

    def metaconverse_evaluator(self, template: BoundQuery) -> Evaluator:
        def evaluate(n: int, log_m: float, upsilon: float) -> BoundResult:
            query = template.model_copy(
                update={
                    "n": n,
                    "m": None,
                    "rate_bits": log_m / (n * _LN2),
                    "snr_db": 10.0 * math.log10(upsilon),
                }
            )
            return self.compute_bound(query)

        return evaluate

    def cone_packing_evaluator(self, sigma2: float = 1.0) -> Evaluator:
        def evaluate(n: int, log_m: float, upsilon: float) -> BoundResult:
            return self.cone_packing(n, None, upsilon, sigma2, log_m=log_m)

        return evaluate

    def lemma1_transform(
        self,
        kind: TransformKind,
        base: Evaluator,
        n: int,
        m: Optional[float],
        upsilon: float,
        s: Optional[float] = None,
        *,
        log_m: Optional[float] = None,
    ) -> BoundResult:
        log_m = _resolve_log_m(m, log_m)
        if kind == "equal_to_maximal_eq16":
            result = base(n + 1, log_m, n * upsilon / (n + 1))
            return result.model_copy(update={"bound_name": f"{result.bound_name}/{kind}"})
        if kind == "equal_to_maximal_lemma1":
            result = base(n + 1, log_m, upsilon)
            return result.model_copy(update={"bound_name": f"{result.bound_name}/{kind}"})
        if kind != "maximal_to_average":
            raise DomainException(f"unknown transform {kind}")

        def split(log_s: float) -> BoundResult:
            return base(n, log_s + log_m, upsilon / -math.expm1(log_s))

        if s is not None:
            if not -log_m < math.log(s) < 0.0:
                raise DomainException(f"split s={s} must lie in (1/M, 1)")
            log_s = math.log(s)
        else:
            log_s = self.__best_split(split, log_m)
        result = split(log_s)
        return BoundResult.from_log(
            log_s + result.log_value,
            bound_name=f"{result.bound_name}/{kind}",
            constraint="average",
            method_used=result.method_used,
            s_star=math.exp(log_s),
            theta2_used=result.theta2_used,
            warnings=result.warnings,
        )

    def cone_packing(
        self,
        n: int,
        m: Optional[float],
        upsilon: float,
        sigma2: float = 1.0,
        *,
        log_m: Optional[float] = None,
    ) -> BoundResult:
        log_m = _resolve_log_m(m, log_m)
        notes = []
        if n > self.settings.CONE_PACKING_MAX_N:
            message = f"cone packing at n={n} is beyond the validated range n <= {self.settings.CONE_PACKING_MAX_N}"
            logger.warning(message)
            notes.append(message)
        angle = half_angle(n, _m_from_log(log_m))
        if angle > 0.5 * math.pi:
            raise DomainException(f"cone packing needs M >= 2, got M={_m_from_log(log_m)}")
        if angle == 0.0:
            value = 1.0
        else:
            value = phi_n(n, angle, sigma2 / upsilon, self.settings.QUAD_ABS_TOL)
        return BoundResult.from_log(
            math.log(value) if value > 0 else -math.inf,
            bound_name="cone-packing",
            constraint="equal",
            method_used="quadrature",
            warnings=notes,
        )

    def cor1_maximal(
        self,
        n: int,
        m: Optional[float],
        upsilon: float,
        sigma2: float = 1.0,
        *,
        log_m: Optional[float] = None,
    ) -> BoundResult:
        result = self.lemma1_transform(
            "equal_to_maximal_eq16", self.cone_packing_evaluator(sigma2), n, m, upsilon, log_m=log_m
        )
        return result.model_copy(update={"bound_name": "cone-packing-maximal", "constraint": "maximal"})

    def sweep(
        self,
        mode: SweepMode,
        template: BoundQuery,
        grid: Sequence[float],
        target_eps: Optional[float] = None,
        workers: Optional[int] = None,
    ) -> List[SweepRow]:
        """Evaluate the grid (values of n, or of M for error_vs_m), rows in grid order."""
        if mode == "maxrate_vs_n" and (target_eps is None or not 0.0 < target_eps < 1.0):
            raise InvalidParamsException("maxrate_vs_n needs a target error probability in (0, 1)")
        workers = workers or self.settings.WORKERS
        task = partial(_sweep_point, self.settings, mode, template, target_eps)
        logger.info(f"sweep {mode} over {len(grid)} points with {workers} worker(s)")
        if workers > 1 and len(grid) > 1:
            with ProcessPoolExecutor(max_workers=workers) as executor:
                chunks = list(executor.map(task, grid))
        else:
            chunks = [task(point) for point in grid]
        rows = [row for chunk in chunks for row in chunk]
        if mode == "error_vs_n" and template.rate_bits is not None:
            self.__report_non_monotone(rows)
        return rows

    def sweep_point(
        self, mode: SweepMode, template: BoundQuery, point: float, target_eps: Optional[float] = None
    ) -> List[SweepRow]:
        if mode == "error_vs_n":
            return [self.__error_row(template.with_n(int(point)))]
        if mode == "maxrate_vs_n":
            return [self.__max_rate_row(template, int(point), math.log(target_eps))]
        if mode == "error_vs_m":
            return self.__family_rows(template, float(point))
        if mode == "mbar_vs_n":
            return [self.__m_bar_row(template, int(point))]
        raise DomainException(f"unknown sweep mode {mode}")

    def __compute(self, query: BoundQuery) -> BoundResult:
        upsilon = query.upsilon
        log_beta = query.log_beta
        notes: List[str] = []
        theta2, policy_s = self.__theta2(query, log_beta)
        method = query.method
        if method == "auto":
            method = "exact" if query.n <= self.settings.EXACT_MAX_N else "saddlepoint-full"
        elif method == "exact" and query.n > self.settings.EXACT_MAX_N:
            notes.append(self.__warn(f"exact path used at n={query.n} > {self.settings.EXACT_MAX_N}"))
        params = TestParams(n=query.n, gamma=upsilon, sigma2=1.0, theta2=theta2)
        name = f"ht-{query.constraint}"

        if query.constraint == "average":
            threshold = self.envelope.m_bar(query.n, upsilon, 1.0, theta2)
            if query.log_m > threshold.log_m_bar:
                solution = self.envelope.f_envelope(query.n, upsilon, 1.0, theta2, log_beta=log_beta)
                notes.extend(solution.warnings)
                if method != "exact":
                    notes.append(self.__warn(f"envelope evaluated with the exact trade-off instead of {method}"))
                return BoundResult.from_log(
                    solution.log_value,
                    bound_name=name,
                    constraint=query.constraint,
                    method_used="exact+envelope",
                    s_star=policy_s,
                    t_star=solution.t0,
                    theta2_used=theta2,
                    warnings=notes,
                )

        log_value, s_star, t_star = self.__tradeoff_value(params, log_beta, method)
        return BoundResult.from_log(
            min(log_value, 0.0),
            bound_name=name,
            constraint=query.constraint,
            method_used=method,
            s_star=s_star if s_star is not None else policy_s,
            t_star=t_star,
            theta2_used=theta2,
            warnings=notes,
        )

    def __theta2(self, query: BoundQuery, log_beta: float) -> Tuple[float, Optional[float]]:
        """Output variance of the policy, with the tilt s that selected it when there is one."""
        upsilon = query.upsilon
        if query.theta_policy == "fixed":
            return query.theta2, None
        if query.theta_policy == "exponent-asymptotic":
            report = self.saddlepoint.sphere_packing(query.rate_nats, upsilon, 1.0)
            return report.theta_tilde2, report.s_star
        if query.theta_policy == "exponent-finite-n":
            result = self.saddlepoint.f_saddlepoint_exponent(query.n, upsilon, 1.0, log_beta=log_beta)
            return result.theta2, result.s_star
        return upsilon + 1.0, None

    def __tradeoff_value(
        self, params: TestParams, log_beta: float, method: str
    ) -> Tuple[float, Optional[float], Optional[float]]:
        if method == "exact":
            t_star = self.tradeoff.solve_t_for_beta(params, log_beta=log_beta)
            return float(log_alpha_pair(params, t_star)[0][0]), None, t_star
        if method in ("saddlepoint-full", "saddlepoint-hat"):
            variant = "full" if method == "saddlepoint-full" else "hat"
            result = self.saddlepoint.f_saddlepoint(params, log_beta=log_beta, variant=variant)
            return result.log_value, result.s_star, None
        if method == "verdu-han":
            value = self.tradeoff.f_nonparametric(params, log_beta=log_beta, mode="verdu-han")
            return value.log_magnitude, None, None
        raise DomainException(f"unknown method {method}")

    def __best_split(self, split: Callable[[float], BoundResult], log_m: float) -> float:
        """ln s maximizing s * base(n, sM, upsilon / (1 - s)) over s in (1/M, 1)."""

        def key(log_s: float) -> float:
            try:
                return log_s + split(log_s).log_value
            except POINT_ERRORS as exc:
                logger.debug(f"split ln s={log_s} failed: {exc}")
                return -math.inf

        margin = 1e-6 * log_m
        grid = np.linspace(-log_m + margin, -margin, _SPLIT_GRID_POINTS)
        keys = np.array([key(float(v)) for v in grid])
        best = int(np.argmax(keys))
        if not np.isfinite(keys[best]):
            raise NoConvergenceException("no split s gives a finite bound", (float(grid[0]), float(grid[-1])))
        left = float(grid[max(best - 1, 0)])
        right = float(grid[min(best + 1, grid.size - 1)])

        def negative_key(log_s: float) -> float:
            value = key(log_s)
            return -value if np.isfinite(value) else _PENALTY

        refined = optimize.minimize_scalar(
            negative_key, bounds=(left, right), method="bounded", options={"xatol": 1e-8}
        )
        if -refined.fun >= keys[best]:
            return float(refined.x)
        return float(grid[best])

    def __error_row(self, query: BoundQuery) -> SweepRow:
        base = dict(n=query.n, m=_m_from_log(query.log_m), rate_bits=query.log_m / (query.n * _LN2))
        try:
            result = self.compute_bound(query)
        except POINT_ERRORS as exc:
            logger.warning(f"sweep point n={query.n} failed: {exc}")
            return SweepRow(bound=f"ht-{query.constraint}", error=f"{type(exc).__name__}: {exc}", **base)
        return SweepRow(
            bound=result.bound_name,
            value=result.value,
            log10_value=result.log10_value,
            method=result.method_used,
            **base,
        )

    def __max_rate_row(self, template: BoundQuery, n: int, log_eps: float) -> SweepRow:
        name = f"ht-{template.constraint}"
        try:
            rate_bits, result = self.__max_rate(template, n, log_eps)
        except POINT_ERRORS as exc:
            logger.warning(f"max-rate point n={n} failed: {exc}")
            return SweepRow(n=n, m=math.nan, rate_bits=math.nan, bound=name, error=f"{type(exc).__name__}: {exc}")
        return SweepRow(
            n=n,
            m=_m_from_log(n * rate_bits * _LN2),
            rate_bits=rate_bits,
            bound=result.bound_name,
            value=result.value,
            log10_value=result.log10_value,
            method=result.method_used,
        )

    def __max_rate(self, template: BoundQuery, n: int, log_eps: float) -> Tuple[float, BoundResult]:
        """Bisection on the rate (bits) until the bound meets log eps within the configured tolerance."""
        capacity_bits = 0.5 * math.log2(1.0 + template.upsilon)
        tolerance = self.settings.MAXRATE_LOG_EPS_RTOL * abs(log_eps)
        cache = {}

        def evaluate(rate_bits: float) -> BoundResult:
            if rate_bits not in cache:
                query = template.model_copy(update={"n": n, "m": None, "rate_bits": rate_bits})
                cache[rate_bits] = self.compute_bound(query)
            return cache[rate_bits]

        def offset(rate_bits: float) -> float:
            return evaluate(rate_bits).log_value - log_eps

        low, high = 1e-3 * capacity_bits, 2.0 * capacity_bits
        if not offset(low) < 0.0 < offset(high):
            logger.warning(f"max-rate bracket [{low}, {high}] not monotone at n={n}; scanning")
            grid = np.linspace(high / self.settings.MAXRATE_SCAN_POINTS, high, self.settings.MAXRATE_SCAN_POINTS)
            crossing = next((i for i, rate in enumerate(grid) if offset(float(rate)) >= 0.0), None)
            if crossing is None or crossing == 0:
                raise NoRootException(f"bound never crosses eps={math.exp(log_eps)} for n={n}", (low, high))
            low, high = float(grid[crossing - 1]), float(grid[crossing])
            if offset(low) >= 0.0:
                raise NoRootException(f"bound never crosses eps={math.exp(log_eps)} for n={n}", (low, high))

        for _ in range(self.settings.T_SOLVER_MAX_ITER):
            middle = 0.5 * (low + high)
            gap = offset(middle)
            if abs(gap) <= tolerance:
                return middle, evaluate(middle)
            if gap < 0.0:
                low = middle
            else:
                high = middle
        raise NoConvergenceException(f"max-rate bisection did not converge at n={n}", (low, high))

    def __family_rows(self, template: BoundQuery, m: float) -> List[SweepRow]:
        n, upsilon = template.n, template.upsilon
        base = dict(n=n, m=m, rate_bits=math.log2(m) / n)
        evaluations = [
            ("cone-packing", lambda: self.cone_packing(n, m, upsilon)),
            ("cone-packing-maximal", lambda: self.cor1_maximal(n, m, upsilon)),
        ]
        for constraint in ("maximal", "average"):
            query = template.model_copy(update={"constraint": constraint, "m": m, "rate_bits": None})
            evaluations.append((f"ht-{constraint}", partial(self.compute_bound, query)))
        rows = []
        for name, evaluate in evaluations:
            try:
                result = evaluate()
            except POINT_ERRORS as exc:
                logger.warning(f"{name} at M={m} failed: {exc}")
                rows.append(SweepRow(bound=name, error=f"{type(exc).__name__}: {exc}", **base))
                continue
            rows.append(
                SweepRow(
                    bound=result.bound_name,
                    value=result.value,
                    log10_value=result.log10_value,
                    method=result.method_used,
                    **base,
                )
            )
        return rows

    def __m_bar_row(self, template: BoundQuery, n: int) -> SweepRow:
        upsilon = template.upsilon
        theta2 = template.theta2 if template.theta_policy == "fixed" else upsilon + 1.0
        try:
            threshold = self.envelope.m_bar(n, upsilon, 1.0, theta2)
        except POINT_ERRORS as exc:
            logger.warning(f"M-bar at n={n} failed: {exc}")
            return SweepRow(n=n, m=math.nan, rate_bits=math.nan, bound="m-bar", error=f"{type(exc).__name__}: {exc}")
        return SweepRow(n=n, m=threshold.m_bar, rate_bits=threshold.rate_bits, bound="m-bar", method="exact")

    def __report_non_monotone(self, rows: List[SweepRow]) -> None:
        values = [(row.n, row.value) for row in rows if row.value is not None]
        for (n_a, a), (n_b, b) in zip(values, values[1:]):
            if n_b > n_a and b > a:
                logger.warning(f"bound increases from n={n_a} ({a}) to n={n_b} ({b}) at fixed rate")

    def __warn(self, message: str) -> str:
        logger.warning(message)
        return message
