"""Statistical tests for paired fold metrics.

Self-contained implementations, so the exact-tail conventions stay pinned:
Shapiro-Wilk via the AS R94 approximation, the Wilcoxon signed-rank test with
an exact tail computed over all sign assignments (tied ranks averaged), the
paired t test, the variance-ratio F test, and the Bonferroni threshold.
"""

from __future__ import annotations

import math
from typing import Sequence

from .errors import DegenerateSampleError

# --- special functions -------------------------------------------------------


def norm_cdf(z: float) -> float:
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


_PPF_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
          1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_PPF_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
          6.680131188771972e+01, -1.328068155288572e+01)
_PPF_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
          -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_PPF_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
          3.754408661907416e+00)


def norm_ppf(p: float) -> float:
    """Inverse standard normal CDF (rational approximation plus one Halley step)."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie strictly between 0 and 1")
    p_low = 0.02425
    if p < p_low:
        q = math.sqrt(-2.0 * math.log(p))
        x = ((((((_PPF_C[0] * q + _PPF_C[1]) * q + _PPF_C[2]) * q + _PPF_C[3]) * q
               + _PPF_C[4]) * q + _PPF_C[5])
             / ((((_PPF_D[0] * q + _PPF_D[1]) * q + _PPF_D[2]) * q + _PPF_D[3]) * q + 1.0))
    elif p <= 1.0 - p_low:
        q = p - 0.5
        r = q * q
        x = ((((((_PPF_A[0] * r + _PPF_A[1]) * r + _PPF_A[2]) * r + _PPF_A[3]) * r
               + _PPF_A[4]) * r + _PPF_A[5]) * q
             / (((((_PPF_B[0] * r + _PPF_B[1]) * r + _PPF_B[2]) * r + _PPF_B[3]) * r
                 + _PPF_B[4]) * r + 1.0))
    else:
        q = math.sqrt(-2.0 * math.log(1.0 - p))
        x = -((((((_PPF_C[0] * q + _PPF_C[1]) * q + _PPF_C[2]) * q + _PPF_C[3]) * q
                + _PPF_C[4]) * q + _PPF_C[5])
              / ((((_PPF_D[0] * q + _PPF_D[1]) * q + _PPF_D[2]) * q + _PPF_D[3]) * q + 1.0))
    err = norm_cdf(x) - p
    u = err * math.sqrt(2.0 * math.pi) * math.exp(x * x / 2.0)
    return x - u / (1.0 + x * u / 2.0)


def _betacf(a: float, b: float, x: float) -> float:
    # Continued fraction for the incomplete beta function (modified Lentz).
    max_iter = 300
    eps = 3e-16
    fpmin = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < fpmin:
        d = fpmin
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < fpmin:
            d = fpmin
        c = 1.0 + aa / c
        if abs(c) < fpmin:
            c = fpmin
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < fpmin:
            d = fpmin
        c = 1.0 + aa / c
        if abs(c) < fpmin:
            c = fpmin
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    return h


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function I_x(a, b)."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_bt = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
             + a * math.log(x) + b * math.log1p(-x))
    bt = math.exp(ln_bt)
    if x < (a + 1.0) / (a + b + 2.0):
        return bt * _betacf(a, b, x) / a
    return 1.0 - bt * _betacf(b, a, 1.0 - x) / b


def t_sf_two_sided(t: float, df: float) -> float:
    """Two-sided tail probability of Student's t."""
    return betainc(df / 2.0, 0.5, df / (df + t * t))


# --- Shapiro-Wilk (AS R94 approximation) --------------------------------------

_SW_C1 = (0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056)
_SW_C2 = (0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633)
_SW_C3 = (0.5440, -0.39978, 0.025054, -6.714e-4)
_SW_C4 = (1.3822, -0.77857, 0.062767, -0.0020322)
_SW_C5 = (-1.5861, -0.31082, -0.083751, 0.0038915)
_SW_C6 = (-0.4803, -0.082676, 0.0030302)
_SW_G = (-2.273, 0.459)


def _poly(coeffs: Sequence[float], x: float) -> float:
    total = 0.0
    for c in reversed(coeffs):
        total = total * x + c
    return total


def shapiro_wilk(sample: Sequence[float]) -> tuple[float, float]:
    """W statistic and p-value for normality, 3 <= n <= 50.

    Weights and the normalizing transform of W follow the published AS R94
    approximation; the p-value is the upper normal tail of the transformed
    statistic.
    """
    x = sorted(float(v) for v in sample)
    n = len(x)
    if not 3 <= n <= 50:
        raise ValueError(f"sample size {n} outside supported range [3, 50]")
    if x[0] == x[-1]:
        raise DegenerateSampleError("all sample values identical")

    n2 = n // 2
    if n == 3:
        weights = [math.sqrt(0.5)]
    else:
        m = [norm_ppf((i - 0.375) / (n + 0.25)) for i in range(1, n2 + 1)]
        summ2 = 2.0 * sum(v * v for v in m)
        ssumm2 = math.sqrt(summ2)
        rsn = 1.0 / math.sqrt(n)
        a1 = _poly(_SW_C1, rsn) - m[0] / ssumm2
        if n > 5:
            start = 2
            a2 = -m[1] / ssumm2 + _poly(_SW_C2, rsn)
            fac = math.sqrt((summ2 - 2.0 * m[0] ** 2 - 2.0 * m[1] ** 2)
                            / (1.0 - 2.0 * a1 ** 2 - 2.0 * a2 ** 2))
            weights = [a1, a2]
        else:
            start = 1
            fac = math.sqrt((summ2 - 2.0 * m[0] ** 2) / (1.0 - 2.0 * a1 ** 2))
            weights = [a1]
        weights += [-m[i] / fac for i in range(start, n2)]

    mean = sum(x) / n
    ssq = sum((v - mean) ** 2 for v in x)
    sax = sum(w * (x[n - 1 - i] - x[i]) for i, w in enumerate(weights))
    w_stat = sax * sax / ssq
    w_stat = min(w_stat, 1.0)

    if n == 3:
        pi6 = 6.0 / math.pi
        stqr = math.asin(math.sqrt(0.75))
        p = pi6 * (math.asin(math.sqrt(w_stat)) - stqr)
        return w_stat, min(max(p, 0.0), 1.0)
    if n <= 11:
        gamma = _poly(_SW_G, float(n))
        arg = gamma - math.log1p(-w_stat)
        if arg <= 0.0:
            return w_stat, 0.0
        w1 = -math.log(arg)
        mu = _poly(_SW_C3, float(n))
        sigma = math.exp(_poly(_SW_C4, float(n)))
    else:
        w1 = math.log1p(-w_stat)
        ln_n = math.log(float(n))
        mu = _poly(_SW_C5, ln_n)
        sigma = math.exp(_poly(_SW_C6, ln_n))
    z = (w1 - mu) / sigma
    return w_stat, 1.0 - norm_cdf(z)


# --- Wilcoxon signed-rank ------------------------------------------------------

WILCOXON_EXACT = "exact"
WILCOXON_NORMAL = "normal_approx"
WILCOXON_EXACT_LIMIT = 25


def _average_ranks(values: Sequence[float]) -> list[float]:
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2.0 + 1.0
        for pos in range(i, j + 1):
            ranks[order[pos]] = avg
        i = j + 1
    return ranks


def wilcoxon_signed_rank(
    a: Sequence[float], b: Sequence[float], mode: str = WILCOXON_EXACT
) -> tuple[float, float]:
    """Signed-rank statistic (sum of positive-difference ranks) and two-sided p.

    Zero differences are dropped; tied absolute differences receive average
    ranks. The exact two-sided p doubles the smaller inclusive tail of the
    null distribution over all 2^n equally likely sign assignments; the
    normal approximation applies a tie correction and a continuity
    correction toward the mean.
    """
    if len(a) != len(b):
        raise ValueError("paired samples must have equal length")
    diffs = [x - y for x, y in zip(a, b) if x != y]
    n = len(diffs)
    if n == 0:
        raise DegenerateSampleError("all paired differences are zero")
    ranks = _average_ranks([abs(d) for d in diffs])
    w_plus = sum(r for d, r in zip(diffs, ranks) if d > 0)

    if mode == WILCOXON_EXACT:
        if n > WILCOXON_EXACT_LIMIT:
            raise ValueError(f"exact mode supports n <= {WILCOXON_EXACT_LIMIT}, got {n}")
        # Distribution of 2*W+ by subset-sum counting over doubled ranks;
        # average ranks are half-integers, so doubling keeps everything exact.
        doubled = [round(2.0 * r) for r in ranks]
        total = sum(doubled)
        counts = [0] * (total + 1)
        counts[0] = 1
        for r2 in doubled:
            for s in range(total, r2 - 1, -1):
                counts[s] += counts[s - r2]
        w2 = round(2.0 * w_plus)
        n_le = sum(counts[: w2 + 1])
        n_ge = sum(counts[w2:])
        p = min(1.0, 2.0 * min(n_le, n_ge) / (1 << n))
        return w_plus, p

    if mode == WILCOXON_NORMAL:
        mean = n * (n + 1) / 4.0
        tie_groups: dict[float, int] = {}
        for d in diffs:
            tie_groups[abs(d)] = tie_groups.get(abs(d), 0) + 1
        tie_corr = sum(t ** 3 - t for t in tie_groups.values()) / 48.0
        var = n * (n + 1) * (2 * n + 1) / 24.0 - tie_corr
        if var <= 0:
            raise DegenerateSampleError("variance of the signed-rank statistic is zero")
        centered = w_plus - mean
        correction = 0.5 * (1 if centered > 0 else -1 if centered < 0 else 0)
        z = (centered - correction) / math.sqrt(var)
        return w_plus, min(1.0, 2.0 * (1.0 - norm_cdf(abs(z))))

    raise ValueError(f"unknown mode {mode!r}")


# --- paired t, variance ratio, Bonferroni --------------------------------------


def paired_t(a: Sequence[float], b: Sequence[float]) -> tuple[float, float]:
    """Paired t statistic with df = n - 1 and its two-sided p."""
    if len(a) != len(b):
        raise ValueError("paired samples must have equal length")
    n = len(a)
    if n < 2:
        raise ValueError("paired t needs at least two pairs")
    diffs = [x - y for x, y in zip(a, b)]
    mean = sum(diffs) / n
    var = sum((d - mean) ** 2 for d in diffs) / (n - 1)
    if var == 0.0:
        raise DegenerateSampleError("paired differences have zero variance")
    t = mean / math.sqrt(var / n)
    return t, t_sf_two_sided(t, n - 1)


def variance_ratio(a: Sequence[float], b: Sequence[float]) -> tuple[float, float]:
    """F = var(a)/var(b) with dfs (n-1, m-1) and a two-sided p."""
    if len(a) < 2 or len(b) < 2:
        raise ValueError("variance ratio needs at least two values per sample")

    def _var(xs: Sequence[float]) -> float:
        m = sum(xs) / len(xs)
        return sum((x - m) ** 2 for x in xs) / (len(xs) - 1)

    var_a, var_b = _var(a), _var(b)
    if var_b == 0.0:
        raise DegenerateSampleError("denominator sample has zero variance")
    f = var_a / var_b
    d1, d2 = len(a) - 1, len(b) - 1
    cdf = betainc(d1 / 2.0, d2 / 2.0, d1 * f / (d1 * f + d2))
    sf = betainc(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f))
    return f, min(1.0, 2.0 * min(cdf, sf))


def bonferroni_threshold(alpha: float, k: int) -> float:
    """Corrected significance threshold alpha / k."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if k < 1:
        raise ValueError("k must be >= 1")
    return alpha / k
