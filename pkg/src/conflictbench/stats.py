"""Welch's t-test and the two one-sided equivalence test (TOST).

The Student-t CDF is evaluated through the regularized incomplete beta
function with a Lentz continued fraction, so nothing here depends on scipy.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["Summary", "WelchResult", "TostResult", "betainc_reg", "t_cdf", "t_sf", "welch_t", "welch_one_sided", "tost_equivalence"]

_EPS = 1e-16
_TINY = 1e-300


def _betacf(a: float, b: float, x: float) -> float:
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c, d = 1.0, 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > _TINY else _TINY)
    h = d
    for m in range(1, 10000):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > _TINY else _TINY)
        c = 1.0 + aa / c
        c = c if abs(c) > _TINY else _TINY
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > _TINY else _TINY)
        c = 1.0 + aa / c
        c = c if abs(c) > _TINY else _TINY
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc_reg(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    lbt = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(lbt) * _betacf(a, b, x) / a
    return 1.0 - math.exp(lbt) * _betacf(b, a, 1.0 - x) / b


def t_sf(t: float, df: float) -> float:
    """P(T > t) for Student's t with ``df`` degrees of freedom."""
    if math.isinf(t):
        return 0.0 if t > 0 else 1.0
    tail = 0.5 * betainc_reg(df / 2.0, 0.5, df / (df + t * t))
    return tail if t >= 0 else 1.0 - tail


def t_cdf(t: float, df: float) -> float:
    return t_sf(-t, df)


@dataclass(frozen=True)
class WelchResult:
    t: float
    df: float
    p: float
    mean_diff: float
    se: float
    degenerate: bool = False


@dataclass(frozen=True)
class Summary:
    """A sample known only through its mean, standard deviation (ddof=1) and size."""
    mean: float
    sd: float
    n: int


def _moments(values):
    summary = values if isinstance(values, Summary) else getattr(values, "summary", None)
    if summary is not None:
        if summary.n < 2:
            raise ValueError("each sample needs at least 2 values")
        return float(summary.mean), float(summary.sd) ** 2, int(summary.n)
    v = np.asarray(getattr(values, "values", values), dtype=np.float64)
    if v.size < 2:
        raise ValueError("each sample needs at least 2 values")
    if not np.all(np.isfinite(v)):
        raise ValueError("sample contains non-finite values")
    return float(v.mean()), float(v.var(ddof=1)), int(v.size)


def _welch_parts(a, b):
    ma, va, na = _moments(a)
    mb, vb, nb = _moments(b)
    sa, sb = va / na, vb / nb
    se = math.sqrt(sa + sb)
    if se == 0.0:
        df = float(na + nb - 2)
    else:
        df = (sa + sb) ** 2 / (sa * sa / (na - 1) + sb * sb / (nb - 1))
    return ma - mb, se, df


def welch_t(sample_a, sample_b) -> WelchResult:
    """Two-sided Welch t-test of equal means.

    With zero variance in both samples the statistic is 0 (p = 1) for equal
    means and infinite (p = 0, ``degenerate``) otherwise.
    """
    diff, se, df = _welch_parts(sample_a, sample_b)
    if se == 0.0:
        if diff == 0.0:
            return WelchResult(0.0, df, 1.0, 0.0, 0.0, True)
        return WelchResult(math.copysign(math.inf, diff), df, 0.0, diff, 0.0, True)
    t = diff / se
    return WelchResult(t, df, min(1.0, 2.0 * t_sf(abs(t), df)), diff, se)


def welch_one_sided(sample_a, sample_b, alternative: str = "greater", shift: float = 0.0) -> float:
    """p-value of H1: mean(a) - mean(b) > shift (``greater``) or < shift (``less``)."""
    diff, se, df = _welch_parts(sample_a, sample_b)
    d = diff - shift
    if se == 0.0:
        if d == 0.0:
            return 0.5
        t = math.copysign(math.inf, d)
    else:
        t = d / se
    return t_sf(t, df) if alternative == "greater" else t_cdf(t, df)


@dataclass(frozen=True)
class TostResult:
    p_lower: float
    p_upper: float
    equivalent: bool
    bound: float

    @property
    def p(self) -> float:
        return max(self.p_lower, self.p_upper)


def tost_equivalence(sample_a, sample_b, bound: float, alpha_star: float = 0.05) -> TostResult:
    """Two one-sided Welch tests of -bound < mean(a) - mean(b) < bound.

    ``equivalent`` is true when both one-sided nulls (difference at or beyond
    a bound) are rejected at ``alpha_star``.
    """
    if bound <= 0:
        raise ValueError("equivalence bound must be positive")
    p_lower = welch_one_sided(sample_a, sample_b, "greater", -bound)
    p_upper = welch_one_sided(sample_a, sample_b, "less", bound)
    return TostResult(p_lower, p_upper, max(p_lower, p_upper) < alpha_star, bound)
