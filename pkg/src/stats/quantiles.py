"""
Exact quantiles, letter values and log-normal Q-Q points.
"""

import math
from typing import List, Sequence, Tuple

import numpy as np

from .models import DomainError, EmptyInputError, NonPositiveSizeError, StatsError, ZeroVarianceError

# Rational approximation coefficients for the standard normal quantile
_A = (
    -3.969683028665376e01,
    2.209460984245205e02,
    -2.759285104469687e02,
    1.383577518672690e02,
    -3.066479806614716e01,
    2.506628277459239e00,
)
_B = (
    -5.447609879822406e01,
    1.615858368580409e02,
    -1.556989798598866e02,
    6.680131188771972e01,
    -1.328068155288572e01,
)
_C = (
    -7.784894002430293e-03,
    -3.223964580411365e-01,
    -2.400758277161838e00,
    -2.549732539343734e00,
    4.374664141464968e00,
    2.938163982698783e00,
)
_D = (
    7.784695709041462e-03,
    3.224671290700398e-01,
    2.445134137142996e00,
    3.754408661907416e00,
)
_P_LOW = 0.02425
_SQRT_2PI = math.sqrt(2.0 * math.pi)
_MAX_EXP_ARG = 709.0

LETTER_LABELS = "MFEDCBA" + "ZYXWVUTSRQPONLKJIHG"


def _sorted_values(values: Sequence[float]) -> np.ndarray:
    array = np.sort(np.asarray(values, dtype=np.float64))
    if array.size == 0:
        raise EmptyInputError("need at least one value")
    return array


def _quantile_of_sorted(ordered: np.ndarray, q: float) -> float:
    position = q * (ordered.size - 1)
    lower = int(math.floor(position))
    if lower >= ordered.size - 1:
        return float(ordered[-1])
    fraction = position - lower
    return float(ordered[lower] + fraction * (ordered[lower + 1] - ordered[lower]))


def exact_quantile(values: Sequence[float], q: float) -> float:
    """
    Quantile by linear interpolation between the closest order statistics.

    With sorted ``v`` and ``p = q * (n - 1)`` the result is
    ``v[floor(p)] + frac(p) * (v[floor(p) + 1] - v[floor(p)])``.
    """
    if not 0.0 <= q <= 1.0:
        raise DomainError(f"quantile probability must lie in [0, 1], got {q}")
    return _quantile_of_sorted(_sorted_values(values), q)


def letter_label(level: int) -> str:
    if level < len(LETTER_LABELS):
        return LETTER_LABELS[level]
    return f"L{level}"


def letter_values(values: Sequence[float], depth: int) -> List[Tuple[str, float, float]]:
    """
    Letter values down to ``depth`` levels.

    Level 0 is the median (reported as both bounds); level ``k`` holds the
    quantiles at ``2^-(k+1)`` and ``1 - 2^-(k+1)``.
    """
    if depth < 0:
        raise StatsError(f"depth must be >= 0, got {depth}")
    ordered = _sorted_values(values)
    median = _quantile_of_sorted(ordered, 0.5)
    result = [(letter_label(0), median, median)]
    for level in range(1, depth + 1):
        tail = 2.0 ** -(level + 1)
        result.append(
            (
                letter_label(level),
                _quantile_of_sorted(ordered, tail),
                _quantile_of_sorted(ordered, 1.0 - tail),
            )
        )
    return result


def _lower_half_quantile(p: float) -> float:
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        x = (((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / (
            (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
        )
    else:
        q = p - 0.5
        r = q * q
        x = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / (
            ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
        )
    # one refinement step against the exact CDF; exp overflows past the subnormal tail
    if x * x / 2.0 > _MAX_EXP_ARG:
        return x
    error = 0.5 * math.erfc(-x / math.sqrt(2.0)) - p
    u = error * _SQRT_2PI * math.exp(x * x / 2.0)
    return x - u / (1.0 + x * u / 2.0)


def inv_normal_cdf(p: float) -> float:
    """Standard normal quantile, accurate to well under 1e-8."""
    if not 0.0 < p < 1.0:
        raise DomainError(f"inv_normal_cdf needs 0 < p < 1, got {p}")
    if p == 0.5:
        return 0.0
    if p > 0.5:
        return -_lower_half_quantile(1.0 - p)
    return _lower_half_quantile(p)


def qq_lognormal_points(sizes: Sequence[float]) -> List[Tuple[float, float]]:
    """
    Q-Q points of standardized log sizes against the standard normal.

    The i-th smallest standardized log size is paired with the normal
    quantile at the plotting position ``(i + 0.5) / n``.
    """
    values = np.asarray(sizes, dtype=np.float64)
    if values.size < 3:
        raise EmptyInputError(f"need at least 3 sizes, got {values.size}")
    if np.any(values <= 0) or not np.all(np.isfinite(values)):
        raise NonPositiveSizeError("every size must be a positive finite number")

    logs = np.sort(np.log(values))
    mu = float(np.mean(logs))
    sigma = float(np.std(logs, ddof=1))
    if sigma <= 1e-12 * max(1.0, abs(mu)):
        raise ZeroVarianceError("all sizes are equal; log sizes have zero variance")

    n = logs.size
    standardized = (logs - mu) / sigma
    return [(inv_normal_cdf((i + 0.5) / n), float(standardized[i])) for i in range(n)]
