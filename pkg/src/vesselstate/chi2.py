"""Regularized incomplete gamma and chi-square quantiles.

The quantile starts from the Wilson-Hilferty approximation and is refined by
safeguarded Newton iterations on the regularized lower incomplete gamma
function, evaluated by its power series below ``a + 1`` and by a Lentz
continued fraction above.
"""
from __future__ import annotations

import math

from .errors import DomainError

_EPS = 1e-16
_TINY = 1e-300
_MAX_ITER = 100_000


def _log_prefactor(a: float, x: float) -> float:
    # log(x^a e^-x / Gamma(a))
    return a * math.log(x) - x - math.lgamma(a)


def _series(a: float, x: float) -> float:
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(_log_prefactor(a, x))


def _continued_fraction(a: float, x: float) -> float:
    # upper tail Q(a, x), modified Lentz
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return math.exp(_log_prefactor(a, x)) * h


def gammainc_lower(a: float, x: float) -> float:
    """Regularized lower incomplete gamma ``P(a, x)``."""
    if a <= 0:
        raise DomainError(f"shape must be positive, got {a}")
    if x < 0:
        raise DomainError(f"x must be non-negative, got {x}")
    if x == 0:
        return 0.0
    if x < a + 1.0:
        return min(1.0, _series(a, x))
    return max(0.0, 1.0 - _continued_fraction(a, x))


def gammainc_upper(a: float, x: float) -> float:
    """Regularized upper incomplete gamma ``Q(a, x) = 1 - P(a, x)``."""
    if a <= 0:
        raise DomainError(f"shape must be positive, got {a}")
    if x < 0:
        raise DomainError(f"x must be non-negative, got {x}")
    if x == 0:
        return 1.0
    if x < a + 1.0:
        return max(0.0, 1.0 - _series(a, x))
    return min(1.0, _continued_fraction(a, x))


def chi2_cdf(x: float, dof: float) -> float:
    if x <= 0:
        return 0.0
    return gammainc_lower(0.5 * dof, 0.5 * x)


def chi2_pdf(x: float, dof: float) -> float:
    if x <= 0:
        return 0.0 if dof > 2 else (0.5 if dof == 2 else math.inf)
    a = 0.5 * dof
    return math.exp((a - 1.0) * math.log(x) - 0.5 * x - a * math.log(2.0) - math.lgamma(a))


def _normal_quantile(p: float) -> float:
    # Acklam's rational approximation, relative error < 1.2e-9; only a seed.
    a = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
         1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
    b = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
         6.680131188771972e01, -1.328068155288572e01)
    c = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
         -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
    d = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
         3.754408661907416e00)
    plow = 0.02425
    if p < plow:
        q = math.sqrt(-2 * math.log(p))
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / \
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1)
    if p > 1 - plow:
        return -_normal_quantile(1 - p)
    q = p - 0.5
    r = q * q
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q / \
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1)


def _wilson_hilferty(dof: float, p: float) -> float:
    z = _normal_quantile(p)
    h = 2.0 / (9.0 * dof)
    return max(dof * (1.0 - h + z * math.sqrt(h)) ** 3, 1e-300)


def chi2_quantile(dof: int, p: float) -> float:
    """Inverse chi-square CDF: ``x`` with ``P(dof/2, x/2) = p``.

    Raises
    ------
    DomainError
        For ``dof < 1`` or ``p`` outside (0, 1).
    """
    if int(dof) != dof or dof < 1:
        raise DomainError(f"dof must be a positive integer, got {dof}")
    if not (0.0 < p < 1.0):
        raise DomainError(f"p must lie in (0, 1), got {p}")
    a = 0.5 * dof
    use_upper = p > 0.5
    target = 1.0 - p if use_upper else p

    def resid(y):
        # y = x / 2; residual measured on the smaller tail for accuracy
        return (gammainc_upper(a, y) - target) if use_upper else (gammainc_lower(a, y) - target)

    def dens(y):
        # d/dy P(a, y); the upper tail has the opposite sign
        return math.exp((a - 1.0) * math.log(y) - y - math.lgamma(a))

    y = 0.5 * _wilson_hilferty(dof, p)
    if p < 0.05:
        # leading term of the series: P(a, y) ~ y^a / Gamma(a + 1)
        y_small = math.exp((math.log(p) + math.lgamma(a + 1.0)) / a)
        y = max(y, y_small)
    lo, hi = 0.0, math.inf
    for _ in range(200):
        f = resid(y)
        increasing = not use_upper
        if (f < 0) == increasing:
            lo = max(lo, y)
        else:
            hi = min(hi, y)
        if f == 0:
            break
        g = dens(y)
        step = f / g if g > 0 else math.nan
        y_new = y - step if increasing else y + step
        if not (math.isfinite(y_new) and lo < y_new < hi):
            if not math.isfinite(hi):
                y_new = 2.0 * y + 1.0
            elif lo > 0.0:
                y_new = math.sqrt(lo * hi)
            else:
                y_new = 0.5 * hi
        if abs(y_new - y) <= 1e-15 * max(y, 1e-300):
            y = y_new
            break
        y = y_new
    return 2.0 * y


def chi2_interval(dof: int, alpha: float) -> tuple[float, float]:
    """Central ``1 - alpha`` interval of the chi-square distribution."""
    if not (0.0 < alpha < 1.0):
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    return chi2_quantile(dof, 0.5 * alpha), chi2_quantile(dof, 1.0 - 0.5 * alpha)
