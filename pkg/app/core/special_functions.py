"""Log-domain special functions behind every bound.

Probabilities such as beta = 2^(-nR) fall far below the double-precision
range, so the Marcum-Q function and its relatives are evaluated as
(log value, log complement) pairs. The array helpers (``log_iv``,
``log_marcum_q_pair``) accept numpy arrays and are what the services use;
the scalar wrappers return schema objects.
"""

import math
from typing import Tuple
import numpy as np
from scipy import special as sc
from exceptions.numeric_exceptions import DomainException, NoConvergenceException
from schemas.models import LogValue, TailProbability

_TINY = 1e-280
_SERIES_EPS = 1e-17
_SERIES_MAX_TERMS = 5000
_CF_MAX_TERMS = 5000
_CF_TOL = 4.0 * np.finfo(float).eps
_FPMIN = 1e-300
_MAX_CELLS = 2_000_000
_WINDOW_SPREAD = 12.0
_WINDOW_PAD = 40.0
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def _as_array(value) -> np.ndarray:
    return np.atleast_1d(np.asarray(value, dtype=float))


# Regularized incomplete gamma, log domain


def _log_lower_series(a: np.ndarray, x: np.ndarray) -> np.ndarray:
    term = np.ones_like(a)
    total = np.ones_like(a)
    denom = a.copy()
    for _ in range(_SERIES_MAX_TERMS):
        denom = denom + 1.0
        term = term * x / denom
        total = total + term
        if np.all(term <= _SERIES_EPS * total):
            break
    return a * np.log(x) - x - sc.gammaln(a + 1.0) + np.log(total)


def _log_upper_fraction(a: np.ndarray, x: np.ndarray) -> Tuple[np.ndarray, int]:
    """ln Q(a, x) by the modified Lentz continued fraction, with the number of terms used.

    Each element stops once its own step is within a few ulps of 1; the
    loop ends when every element has stopped.
    """
    c = np.full_like(a, 1.0 / _FPMIN)
    b = x + 1.0 - a
    d = 1.0 / np.where(np.abs(b) < _FPMIN, _FPMIN, b)
    h = d.copy()
    live = np.arange(a.size)
    terms = 0
    while live.size:
        terms += 1
        if terms >= _CF_MAX_TERMS:
            raise NoConvergenceException(
                f"incomplete gamma fraction did not converge in {_CF_MAX_TERMS} terms for {live.size} arguments",
                (float(a[live].min()), float(a[live].max())),
            )
        a_live = a[live]
        an = -terms * (terms - a_live)
        b_live = x[live] + 1.0 - a_live + 2.0 * terms
        d_live = an * d[live] + b_live
        d_live = 1.0 / np.where(np.abs(d_live) < _FPMIN, _FPMIN, d_live)
        c_live = b_live + an / c[live]
        c_live = np.where(np.abs(c_live) < _FPMIN, _FPMIN, c_live)
        step = d_live * c_live
        d[live], c[live] = d_live, c_live
        h[live] *= step
        live = live[np.abs(step - 1.0) > _CF_TOL]
    return a * np.log(x) - x - sc.gammaln(a) + np.log(h), terms


def log_gammainc_lower(a, x) -> np.ndarray:
    """log P(a, x), accurate where P underflows in linear form."""
    a, x = np.broadcast_arrays(_as_array(a), _as_array(x))
    a, x = a.astype(float), x.astype(float)
    p = sc.gammainc(a, x)
    out = np.full(p.shape, -np.inf)
    np.log(p, out=out, where=p > 0)
    small = (p < _TINY) & (x > 0)
    if np.any(small):
        out[small] = _log_lower_series(a[small], x[small])
    return out


def log_gammainc_upper(a, x) -> np.ndarray:
    """log Q(a, x) = log(1 - P(a, x)), accurate where Q underflows in linear form."""
    a, x = np.broadcast_arrays(_as_array(a), _as_array(x))
    a, x = a.astype(float), x.astype(float)
    q = sc.gammaincc(a, x)
    out = np.full(q.shape, -np.inf)
    np.log(q, out=out, where=q > 0)
    small = (q < _TINY) & (x > a)
    if np.any(small):
        out[small] = _log_upper_fraction(a[small], x[small])[0]
    return out


# Modified Bessel function of the first kind


def _log_iv_series(nu: np.ndarray, x: np.ndarray) -> np.ndarray:
    quarter = 0.25 * x * x
    term = np.ones_like(nu)
    total = np.ones_like(nu)
    for k in range(1, _SERIES_MAX_TERMS):
        term = term * quarter / (k * (nu + k))
        total = total + term
        if np.all(term <= _SERIES_EPS * total):
            break
    return nu * np.log(0.5 * x) - sc.gammaln(nu + 1.0) + np.log(total)


def _log_iv_debye(nu: np.ndarray, x: np.ndarray) -> np.ndarray:
    z = x / nu
    root = np.sqrt(1.0 + z * z)
    eta = root + np.log(z / (1.0 + root))
    p = 1.0 / root
    p2 = p * p
    u1 = p * (3.0 - 5.0 * p2) / 24.0
    u2 = p2 * (81.0 - 462.0 * p2 + 385.0 * p2 * p2) / 1152.0
    u3 = p * p2 * (30375.0 - 369603.0 * p2 + 765765.0 * p2**2 - 425425.0 * p2**3) / 414720.0
    u4 = p2 * p2 * (
        4465125.0
        - 94121676.0 * p2
        + 349922430.0 * p2**2
        - 446185740.0 * p2**3
        + 185910725.0 * p2**4
    ) / 39813120.0
    correction = 1.0 + u1 / nu + u2 / nu**2 + u3 / nu**3 + u4 / nu**4
    return nu * eta - _LOG_SQRT_2PI - 0.5 * np.log(nu) - 0.5 * np.log(root) + np.log(correction)


def log_iv(nu, x) -> np.ndarray:
    """Elementwise ln I_nu(x) for x >= 0; order -1/2 is admitted for odd n = 1."""
    nu, x = np.broadcast_arrays(_as_array(nu), _as_array(x))
    nu, x = nu.astype(float), x.astype(float)
    if np.any(nu < -0.5) or np.any(x < 0):
        raise DomainException("log_iv needs nu >= -1/2 and x >= 0")
    scaled = sc.ive(nu, x)
    out = np.full(scaled.shape, -np.inf)
    np.log(scaled, out=out, where=scaled > 0)
    out = out + x
    zero = x == 0
    out[zero] = np.where(nu[zero] == 0, 0.0, -np.inf)
    fallback = ~zero & ~(scaled > _TINY)
    if np.any(fallback):
        series = fallback & (0.25 * x * x <= 50.0 * (nu + 1.0))
        debye = fallback & ~series
        if np.any(series):
            out[series] = _log_iv_series(nu[series], x[series])
        if np.any(debye):
            out[debye] = _log_iv_debye(nu[debye], x[debye])
    return out


def log_bessel_i(nu: float, x: float) -> LogValue:
    if not (math.isfinite(nu) and math.isfinite(x)) or nu < 0 or x < 0:
        raise DomainException(f"log_bessel_i needs finite nu >= 0 and x >= 0, got nu={nu}, x={x}")
    return LogValue(log_magnitude=float(log_iv(nu, x)[0]))


# Generalized Marcum-Q function


def _balance_index(m: float, c: float) -> float:
    # k solving (k + 1)(k + m) = c: where the Poisson weight ratio meets the gamma ratio
    return max(0.0, 0.5 * (-(m + 1.0) + math.sqrt((m - 1.0) ** 2 + 4.0 * c)))


def _poisson_window(m: float, lam: float, x_min: float, x_max: float) -> Tuple[int, int]:
    low = min(lam, _balance_index(m, lam * x_min))
    high = max(lam, _balance_index(m, lam * x_max))
    k_lo = max(0, int(math.floor(low - _WINDOW_SPREAD * math.sqrt(low) - _WINDOW_PAD)))
    k_hi = int(math.ceil(high + _WINDOW_SPREAD * math.sqrt(high) + _WINDOW_PAD))
    return k_lo, k_hi


def _mixture_block(m: float, lam: float, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    k_lo, k_hi = _poisson_window(m, lam, float(x.min()), float(x.max()))
    if (k_hi - k_lo + 1) * x.size > _MAX_CELLS and x.size > 1:
        half = x.size // 2
        upper_a, lower_a = _mixture_block(m, lam, x[:half])
        upper_b, lower_b = _mixture_block(m, lam, x[half:])
        return np.concatenate([upper_a, upper_b]), np.concatenate([lower_a, lower_b])
    k = np.arange(k_lo, k_hi + 1, dtype=float)
    log_weight = k * math.log(lam) - lam - sc.gammaln(k + 1.0)
    order = (m + k)[:, None]
    grid = x[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        upper = sc.logsumexp(log_weight[:, None] + log_gammainc_upper(order, grid), axis=0)
        lower = sc.logsumexp(log_weight[:, None] + log_gammainc_lower(order, grid), axis=0)
    return upper, lower


def log_marcum_q_pair(m: float, a: float, b) -> Tuple[np.ndarray, np.ndarray]:
    """(ln Q_m(a, b), ln(1 - Q_m(a, b))) for scalar m, a and an array of b.

    Q_m(a, b) is the Poisson(a^2/2) mixture of upper regularized gammas of
    order m + k at b^2/2; the complement mixes the lower ones. Both sums have
    nonnegative terms, so each tail keeps full relative precision.
    """
    if m <= 0 or a < 0:
        raise DomainException(f"Marcum-Q needs m > 0 and a >= 0, got m={m}, a={a}")
    b = _as_array(b)
    if np.any(b < 0) or not np.all(np.isfinite(b)):
        raise DomainException("Marcum-Q needs finite b >= 0")
    x = 0.5 * b * b
    log_q = np.zeros_like(x)
    log_p = np.full_like(x, -np.inf)
    positive = x > 0
    if not np.any(positive):
        return log_q, log_p
    lam = 0.5 * a * a
    xs = x[positive]
    if lam == 0.0:
        log_q[positive] = log_gammainc_upper(m, xs)
        log_p[positive] = log_gammainc_lower(m, xs)
        return log_q, log_p
    order = np.argsort(xs, kind="stable")
    upper, lower = _mixture_block(m, lam, xs[order])
    upper_out = np.empty_like(upper)
    lower_out = np.empty_like(lower)
    upper_out[order] = upper
    lower_out[order] = lower
    log_q[positive] = np.minimum(upper_out, 0.0)
    log_p[positive] = np.minimum(lower_out, 0.0)
    return log_q, log_p


def marcum_q(m: float, a: float, b: float) -> TailProbability:
    if not all(math.isfinite(v) for v in (m, a, b)) or b < 0:
        raise DomainException(f"marcum_q got m={m}, a={a}, b={b}")
    log_q, log_p = log_marcum_q_pair(m, a, b)
    return TailProbability(log_value=float(log_q[0]), log_complement=float(log_p[0]))


def log_marcum_q_density(m: float, a: float, b) -> np.ndarray:
    """ln(-dQ_m(a, b)/db), including the a = 0 limit."""
    b = _as_array(b)
    out = np.full_like(b, -np.inf)
    positive = b > 0
    bp = b[positive]
    if a == 0.0:
        out[positive] = (
            (2.0 * m - 1.0) * np.log(bp) - 0.5 * bp * bp - (m - 1.0) * math.log(2.0) - sc.gammaln(m)
        )
    else:
        out[positive] = (
            m * np.log(bp)
            - (m - 1.0) * math.log(a)
            - 0.5 * (a * a + bp * bp)
            + log_iv(m - 1.0, a * bp)
        )
    return out


def marcum_q_grad(m: float, a: float, b: float) -> Tuple[float, float]:
    if m <= 0 or a <= 0 or b <= 0:
        raise DomainException("marcum_q_grad needs m, a, b > 0; use the a -> 0 limit form at a = 0")
    prefactor = m * math.log(b) - (m - 1.0) * math.log(a) - 0.5 * (a * a + b * b)
    dq_da = math.exp(prefactor + float(log_iv(m, a * b)[0]))
    dq_db = -math.exp(prefactor + float(log_iv(m - 1.0, a * b)[0]))
    return dq_da, dq_db


def noncentral_chi2_sf(n: int, nu: float, x: float) -> float:
    if n < 1 or nu < 0 or x < 0:
        raise DomainException(f"noncentral_chi2_sf got n={n}, nu={nu}, x={x}")
    return marcum_q(0.5 * n, math.sqrt(nu), math.sqrt(x)).value


# Gaussian tails and incomplete beta


def psi_stable(lam: float) -> float:
    """Q(|lam|) exp(lam^2 / 2) through the scaled complementary error function."""
    return 0.5 * float(sc.erfcx(abs(lam) / math.sqrt(2.0)))


def gaussian_q(x: float) -> float:
    return 0.5 * float(sc.erfc(x / math.sqrt(2.0)))


def reg_inc_beta(x: float, p: float, q: float) -> float:
    if not 0.0 <= x <= 1.0 or p <= 0 or q <= 0:
        raise DomainException(f"reg_inc_beta got x={x}, p={p}, q={q}")
    return float(sc.betainc(p, q, x))


def log_signed_sum(log_terms, signs) -> Tuple[float, float]:
    """Sum of sign_i * exp(log_term_i) as (sign, log|sum|)."""
    log_terms = np.asarray(log_terms, dtype=float)
    signs = np.asarray(signs, dtype=float)
    keep = np.isfinite(log_terms)
    if not np.any(keep):
        return 0.0, -math.inf
    with np.errstate(divide="ignore"):
        value, sign = sc.logsumexp(log_terms[keep], b=signs[keep], return_sign=True)
    return float(sign), float(value)
