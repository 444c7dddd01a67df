"""Statistics backend: descriptives, one-way ANOVA, Bonferroni post-hoc.

The p-value machinery is self-contained: the regularized incomplete beta
function is evaluated with a modified-Lentz continued fraction (with the
usual symmetry transform), which covers both the F and the t distributions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .errors import DegenerateInput, DomainError, EmptyInput

_CF_MAX_ITER = 300
_CF_EPS = 1e-16
_CF_FPMIN = 1e-300

SIGNIFICANCE_LEVEL = 0.05


def descriptive_stats(values: Sequence[float]) -> tuple[float, float]:
    """Mean and standard error (sample sd over sqrt(n)); a single value has
    standard error 0 by convention."""
    if not values:
        raise EmptyInput("no values")
    n = len(values)
    mean = sum(values) / n
    if n == 1:
        return mean, 0.0
    ss = sum((v - mean) ** 2 for v in values)
    sd = math.sqrt(ss / (n - 1))
    return mean, sd / math.sqrt(n)


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _CF_FPMIN:
        d = _CF_FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_FPMIN:
            d = _CF_FPMIN
        c = 1.0 + aa / c
        if abs(c) < _CF_FPMIN:
            c = _CF_FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_FPMIN:
            d = _CF_FPMIN
        c = 1.0 + aa / c
        if abs(c) < _CF_FPMIN:
            c = _CF_FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return h
    raise DomainError(f"incomplete beta did not converge for a={a}, b={b}, x={x}")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and x in [0, 1].

    Uses the continued fraction directly for x below (a+1)/(a+b+2) and the
    symmetry I_x(a,b) = 1 - I_{1-x}(b,a) above it, where the fraction
    converges fast. Absolute error is well inside 1e-10.
    """
    if not (a > 0 and b > 0):
        raise DomainError("a and b must be positive")
    if not (0.0 <= x <= 1.0):
        raise DomainError("x must be in [0, 1]")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    log_bt = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    bt = math.exp(log_bt)
    if x < (a + 1.0) / (a + b + 2.0):
        return bt * _betacf(a, b, x) / a
    return 1.0 - bt * _betacf(b, a, 1.0 - x) / b


@dataclass(frozen=True)
class AnovaResult:
    f_stat: float
    df_between: int
    df_within: int
    p_value: float
    group_means: tuple[float, ...]
    degenerate: bool = False


def one_way_anova(groups: Sequence[Sequence[float]]) -> AnovaResult:
    """Classic between-groups F test via direct sums of squares.

    All-identical group means with zero within-group variance give F=0, p=1;
    distinct means over zero within-group variance give p=0 and are flagged
    as degenerate.
    """
    if len(groups) < 2:
        raise DegenerateInput("need at least two groups")
    for gi, group in enumerate(groups):
        if len(group) < 2:
            raise DegenerateInput(f"group {gi} has fewer than two values")
    k = len(groups)
    ns = [len(g) for g in groups]
    total_n = sum(ns)
    means = [sum(g) / len(g) for g in groups]
    grand = sum(sum(g) for g in groups) / total_n
    ss_between = sum(n * (m - grand) ** 2 for n, m in zip(ns, means))
    ss_within = sum(sum((v - m) ** 2 for v in g) for g, m in zip(groups, means))
    df_between = k - 1
    df_within = total_n - k
    ms_between = ss_between / df_between
    ms_within = ss_within / df_within
    if ms_within == 0.0:
        if ms_between == 0.0:
            return AnovaResult(0.0, df_between, df_within, 1.0, tuple(means))
        return AnovaResult(math.inf, df_between, df_within, 0.0, tuple(means),
                           degenerate=True)
    f_stat = ms_between / ms_within
    if f_stat <= 0.0:
        p_value = 1.0
    else:
        x = df_within / (df_within + df_between * f_stat)
        p_value = regularized_incomplete_beta(df_within / 2.0, df_between / 2.0, x)
    return AnovaResult(f_stat, df_between, df_within, p_value, tuple(means))


def two_sample_t_pooled(x: Sequence[float], y: Sequence[float]) -> tuple[float, int, float]:
    """Pooled-variance two-sided t test: returns (t, df, p)."""
    if len(x) < 2 or len(y) < 2:
        raise DegenerateInput("each sample needs at least two values")
    nx, ny = len(x), len(y)
    mx = sum(x) / nx
    my = sum(y) / ny
    ssx = sum((v - mx) ** 2 for v in x)
    ssy = sum((v - my) ** 2 for v in y)
    df = nx + ny - 2
    pooled_var = (ssx + ssy) / df
    if pooled_var == 0.0:
        if mx == my:
            return 0.0, df, 1.0
        return math.inf, df, 0.0
    t = (mx - my) / math.sqrt(pooled_var * (1.0 / nx + 1.0 / ny))
    if t == 0.0:
        return 0.0, df, 1.0
    p = regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t))
    return t, df, p


@dataclass(frozen=True)
class PairwiseComparison:
    pair: tuple[str, str]
    raw_p: float
    adjusted_p: float
    significant: bool


def bonferroni_pairwise(
    groups: Sequence[Sequence[float]],
    labels: Sequence[str] | None = None,
) -> list[PairwiseComparison]:
    """All pairwise pooled t tests with Bonferroni-adjusted p-values."""
    if len(groups) < 2:
        raise DegenerateInput("need at least two groups")
    if labels is None:
        labels = [f"g{i + 1}" for i in range(len(groups))]
    if len(labels) != len(groups):
        raise DegenerateInput("labels must match groups")
    pairs = [(i, j) for i in range(len(groups)) for j in range(i + 1, len(groups))]
    n_pairs = len(pairs)
    results = []
    for i, j in pairs:
        _, _, raw_p = two_sample_t_pooled(groups[i], groups[j])
        adjusted = min(1.0, raw_p * n_pairs)
        results.append(PairwiseComparison(
            pair=(labels[i], labels[j]),
            raw_p=raw_p,
            adjusted_p=adjusted,
            significant=adjusted < SIGNIFICANCE_LEVEL,
        ))
    return results
