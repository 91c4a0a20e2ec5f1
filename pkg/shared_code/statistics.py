import math
import sys
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from shared_code.exceptions import DegenerateTestError, StatisticsError

MAX_ITERATIONS = 500
RELATIVE_TOLERANCE = 1e-10
FPMIN = 1e-300


@dataclass(frozen=True)
class Summary:
    mean: float
    sd: float
    max: float
    n: int


@dataclass(frozen=True)
class WelchResult:
    t: float
    df: float
    p: float


def summarize(samples: Sequence[float]) -> Summary:
    """Mean, sample standard deviation (n-1 denominator), max and size"""
    values = np.asarray(list(samples), dtype=float)
    if values.size < 2:
        raise StatisticsError(f"Need at least 2 samples, got {values.size}")
    return Summary(
        mean=float(values.mean()),
        sd=float(values.std(ddof=1)),
        max=float(values.max()),
        n=int(values.size),
    )


def betacf(a: float, b: float, x: float) -> float:
    """
    Continued fraction for the incomplete beta function, evaluated with the
    modified Lentz method.
    """
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < FPMIN:
        d = FPMIN
    d = 1.0 / d
    h = d

    for m in range(1, MAX_ITERATIONS + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < FPMIN:
            d = FPMIN
        c = 1.0 + aa / c
        if abs(c) < FPMIN:
            c = FPMIN
        d = 1.0 / d
        h *= d * c

        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < FPMIN:
            d = FPMIN
        c = 1.0 + aa / c
        if abs(c) < FPMIN:
            c = FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < RELATIVE_TOLERANCE:
            return h

    raise StatisticsError(f"betacf did not converge for a={a}, b={b}, x={x}")


def betai(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function I_x(a, b)"""
    if a <= 0 or b <= 0:
        raise StatisticsError("betai needs positive a and b")
    if x < 0.0 or x > 1.0:
        raise StatisticsError(f"betai x out of range: {x}")
    if x == 0.0 or x == 1.0:
        return x

    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * betacf(a, b, x) / a
    return 1.0 - front * betacf(b, a, 1.0 - x) / b


def student_t_two_tailed(t: float, df: float) -> float:
    if df <= 0:
        raise StatisticsError("degrees of freedom must be positive")
    if t == 0.0:
        return 1.0
    p = betai(0.5 * df, 0.5, df / (df + t * t))
    # p stays in (0, 1]; far tails underflow to the smallest normal float
    return min(max(p, sys.float_info.min), 1.0)


def welch_t(a: Sequence[float], b: Sequence[float]) -> WelchResult:
    """Two-sample unequal-variance t-test with Welch-Satterthwaite degrees of freedom"""
    sa, sb = summarize(a), summarize(b)
    va = sa.sd ** 2 / sa.n
    vb = sb.sd ** 2 / sb.n
    if va == 0.0 and vb == 0.0:
        raise DegenerateTestError("Both samples have zero variance")

    t = (sa.mean - sb.mean) / math.sqrt(va + vb)
    df = (va + vb) ** 2 / (va ** 2 / (sa.n - 1) + vb ** 2 / (sb.n - 1))
    return WelchResult(t=t, df=df, p=student_t_two_tailed(t, df))
