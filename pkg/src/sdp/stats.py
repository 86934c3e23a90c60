"""
Small-sample statistics for the benchmark reports.

The t and F tail probabilities go through a continued-fraction regularized
incomplete beta function, so reports do not depend on an external
statistics package.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError

_FPMIN = 1e-300
_EPS = 1e-16


def _betacf(a: float, b: float, x: float) -> float:
    # modified Lentz evaluation of the incomplete-beta continued fraction
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c, d = 1.0, 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > _FPMIN else _FPMIN)
    h = d
    for m in range(1, 10_000):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > _FPMIN else _FPMIN)
        c = 1.0 + aa / c
        c = c if abs(c) > _FPMIN else _FPMIN
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > _FPMIN else _FPMIN)
        c = 1.0 + aa / c
        c = c if abs(c) > _FPMIN else _FPMIN
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta ``I_x(a, b)``."""
    if a <= 0 or b <= 0:
        raise ConfigError("betainc needs a, b > 0")
    if x <= 0:
        return 0.0
    if x >= 1:
        return 1.0
    lbt = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
           + a * math.log(x) + b * math.log1p(-x))
    bt = math.exp(lbt)
    if x < (a + 1.0) / (a + b + 2.0):
        return bt * _betacf(a, b, x) / a
    return 1.0 - bt * _betacf(b, a, 1.0 - x) / b


def t_sf(t: float, df: float) -> float:
    """Upper tail ``P(T > t)`` of Student's t."""
    if math.isinf(t):
        return 0.0 if t > 0 else 1.0
    tail = 0.5 * betainc(df / 2.0, 0.5, df / (df + t * t))
    return tail if t >= 0 else 1.0 - tail


def t_cdf(t: float, df: float) -> float:
    return 1.0 - t_sf(t, df)


def t_ppf(q: float, df: float) -> float:
    """Quantile of Student's t by bisection on the tail probability."""
    if not 0 < q < 1:
        raise ConfigError("quantile level must lie in (0, 1)")
    if q == 0.5:
        return 0.0
    if q < 0.5:
        return -t_ppf(1.0 - q, df)
    target = 1.0 - q
    lo, hi = 0.0, 1.0
    while t_sf(hi, df) > target:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if t_sf(mid, df) > target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-13 * max(1.0, hi):
            break
    return 0.5 * (lo + hi)


def f_sf(f: float, dfn: float, dfd: float) -> float:
    """Upper tail ``P(F > f)`` of the F distribution."""
    if f <= 0:
        return 1.0
    if math.isinf(f):
        return 0.0
    return betainc(dfd / 2.0, dfn / 2.0, dfd / (dfd + dfn * f))


# --------------------------------------------------------------------------
# summaries and tests
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Summary:
    n: int
    mean: float
    std: float
    half_width: float

    @property
    def ci95(self):
        return (self.mean - self.half_width, self.mean + self.half_width)

    def to_dict(self) -> dict:
        lo, hi = self.ci95
        return {"n": self.n, "mean": self.mean, "std": self.std,
                "ci95_low": lo, "ci95_high": hi, "ci95_half_width": self.half_width}


def aggregate_stats(values: Sequence[float], level: float = 0.95) -> Summary:
    """Mean, sample std (n - 1) and Student-t confidence half-width."""
    x = np.asarray(values, dtype=float)
    n = x.size
    if n < 2:
        raise ConfigError("aggregate_stats needs at least two values")
    mean = float(np.mean(x))
    std = float(np.std(x, ddof=1))
    q = t_ppf(0.5 + level / 2.0, n - 1)
    return Summary(n=n, mean=mean, std=std, half_width=q * std / math.sqrt(n))


def var_drop(std_sdp: float, std_base: float) -> float:
    """Fractional variance reduction ``1 - (s_sdp / s_base)^2``."""
    if not std_base > 0:
        raise ConfigError("baseline std must be > 0")
    return 1.0 - (std_sdp / std_base) ** 2


@dataclass(frozen=True)
class SignificanceResult:
    stat: float
    p: float
    df: tuple = ()
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {"stat": self.stat if math.isfinite(self.stat) else str(self.stat),
                "p": self.p, "df": list(self.df), "degenerate": self.degenerate}


def brown_forsythe(groups: Sequence[Sequence[float]]) -> SignificanceResult:
    """Levene's test on absolute deviations from group medians."""
    if len(groups) < 2:
        raise ConfigError("Brown-Forsythe needs at least two groups")
    zs = []
    for g in groups:
        g = np.asarray(g, dtype=float)
        if g.size < 2:
            raise ConfigError("each group needs at least two values")
        zs.append(np.abs(g - np.median(g)))
    k = len(zs)
    n = sum(z.size for z in zs)
    dfn, dfd = k - 1, n - k
    if dfn < 1 or dfd < 1:
        raise ConfigError("degenerate degrees of freedom")
    grand = np.concatenate(zs).mean()
    between = sum(z.size * (z.mean() - grand) ** 2 for z in zs)
    within = sum(((z - z.mean()) ** 2).sum() for z in zs)
    if within == 0:
        if between == 0:
            return SignificanceResult(0.0, 1.0, (dfn, dfd), degenerate=True)
        return SignificanceResult(math.inf, 0.0, (dfn, dfd), degenerate=True)
    stat = (dfd / dfn) * between / within
    return SignificanceResult(float(stat), float(f_sf(stat, dfn, dfd)), (dfn, dfd))


def paired_t_test(a: Sequence[float], b: Sequence[float]) -> SignificanceResult:
    """Two-sided paired t test on ``a - b``."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ConfigError("paired samples must have equal length")
    n = a.size
    if n < 2:
        raise ConfigError("paired t test needs at least two pairs")
    d = a - b
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    if sd == 0:
        if mean == 0:
            return SignificanceResult(0.0, 1.0, (n - 1,), degenerate=True)
        return SignificanceResult(math.copysign(math.inf, mean), 0.0, (n - 1,), degenerate=True)
    stat = mean / (sd / math.sqrt(n))
    return SignificanceResult(float(stat), float(min(1.0, 2.0 * t_sf(abs(stat), n - 1))), (n - 1,))
