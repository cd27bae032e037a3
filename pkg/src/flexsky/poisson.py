"""Poisson distribution evaluation: mass, cumulative, survival, quantile and the
mean-centred band used by the clamped fast path.

Everything is computed by direct summation of mass terms generated with the
multiplicative recurrence ``p(j+1) = p(j) * lam / (j+1)``.  For rates above
``LOG_SPACE_THRESHOLD`` the recurrence is anchored at the mode, whose value is
obtained in log space, so that neither ``exp(-lam)`` nor ``lam**k / k!``
under/overflows.  A term's value depends only on ``(lam, j)``, never on how far
the sum runs, which keeps ``cdf`` exactly monotone in ``K``.
"""

from __future__ import annotations

import math
import numbers
from dataclasses import dataclass
from typing import Union

from .errors import DomainError, NumericalFailure

LOG_SPACE_THRESHOLD = 30


@dataclass(frozen=True)
class PoissonParams:
    """Rate of a Poisson variable. Both its mean and its variance equal ``lam``."""

    lam: float

    def __post_init__(self):
        lam = self.lam
        if isinstance(lam, bool) or not isinstance(lam, numbers.Real):
            raise DomainError(f"Poisson rate must be a real number, got {lam!r}")
        if not math.isfinite(lam):
            raise DomainError(f"Poisson rate must be finite, got {lam!r}")
        if lam < 0:
            raise DomainError(f"Poisson rate must be non-negative, got {lam!r}")
        object.__setattr__(self, "lam", float(lam))

    @property
    def mean(self) -> float:
        return self.lam

    @property
    def variance(self) -> float:
        return self.lam

    @property
    def std(self) -> float:
        return math.sqrt(self.lam)


@dataclass(frozen=True)
class NumericsConfig:
    """Knobs for the clamped path and the quantile search.

    ``quantile_upper_clamp`` of ``None`` means ``lam + 10*sqrt(lam) + 10`` for
    whichever rate the search runs on.
    """

    band_multiplier: float = 2.0
    clamp_enabled: bool = False
    quantile_upper_clamp: float | None = None
    summation_tolerance: float = 1e-15

    def __post_init__(self):
        if not (self.band_multiplier > 0 and math.isfinite(self.band_multiplier)):
            raise DomainError(f"band_multiplier must be positive, got {self.band_multiplier!r}")
        if self.quantile_upper_clamp is not None and not self.quantile_upper_clamp > 0:
            raise DomainError(
                f"quantile_upper_clamp must be positive, got {self.quantile_upper_clamp!r}"
            )
        if not self.summation_tolerance > 0:
            raise DomainError(
                f"summation_tolerance must be positive, got {self.summation_tolerance!r}"
            )

    def upper_clamp(self, lam: float) -> float:
        if self.quantile_upper_clamp is None:
            return lam + 10.0 * math.sqrt(lam) + 10.0
        return self.quantile_upper_clamp


DEFAULT_CONFIG = NumericsConfig()

ParamsLike = Union[PoissonParams, float, int]


def as_params(params: ParamsLike) -> PoissonParams:
    return params if isinstance(params, PoissonParams) else PoissonParams(params)


def _count_floor(k: float) -> int:
    if isinstance(k, bool) or not isinstance(k, numbers.Real):
        raise DomainError(f"count threshold must be a real number, got {k!r}")
    if not math.isfinite(k):
        raise DomainError(f"count threshold must be finite, got {k!r}")
    if k < 0:
        raise DomainError(f"count threshold must be non-negative, got {k!r}")
    return int(math.floor(k))


_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def _stirling_error(n: int) -> float:
    """``log(n!) - log(sqrt(2 pi n) (n/e)^n)`` for ``n >= 1``."""
    if n <= 15:
        return math.lgamma(n + 1.0) - (n + 0.5) * math.log(n) + n - _LOG_SQRT_2PI
    nn = float(n) * n
    s0, s1, s2, s3, s4 = 1 / 12, 1 / 360, 1 / 1260, 1 / 1680, 1 / 1188
    if n > 500:
        return (s0 - s1 / nn) / n
    if n > 80:
        return (s0 - (s1 - s2 / nn) / nn) / n
    if n > 35:
        return (s0 - (s1 - (s2 - s3 / nn) / nn) / nn) / n
    return (s0 - (s1 - (s2 - (s3 - s4 / nn) / nn) / nn) / nn) / n


def _deviance(x: float, lam: float) -> float:
    """``x log(x / lam) + lam - x`` without cancellation when ``x`` is near ``lam``."""
    if abs(x - lam) < 0.1 * (x + lam):
        v = (x - lam) / (x + lam)
        s = (x - lam) * v
        ej = 2.0 * x * v
        v2 = v * v
        j = 1
        while True:
            ej *= v2
            nxt = s + ej / (2 * j + 1)
            if nxt == s:
                return s
            s = nxt
            j += 1
    return x * math.log(x / lam) + lam - x


def _log_term(lam: float, j: int) -> float:
    """Log mass at ``j`` in saddle-point form; accurate to a few ulps for large ``lam``."""
    if j == 0:
        return -lam
    return -_stirling_error(j) - _deviance(float(j), lam) - _LOG_SQRT_2PI - 0.5 * math.log(j)


def _terms(lam: float, n: int) -> list[float]:
    """Mass terms ``p(0) .. p(n)``."""
    if lam == 0.0:
        return [1.0] + [0.0] * n
    if lam <= LOG_SPACE_THRESHOLD:
        out = [math.exp(-lam)]
        for j in range(1, n + 1):
            out.append(out[-1] * lam / j)
        return out
    mode = int(math.floor(lam))
    anchor = math.exp(_log_term(lam, mode))
    below = [anchor]
    for j in range(mode, 0, -1):
        below.append(below[-1] * j / lam)
    below.reverse()  # below[j] == p(j) for j <= mode
    if n <= mode:
        return below[: n + 1]
    out = below
    for j in range(mode, n):
        out.append(out[-1] * lam / (j + 1))
    return out


def pmf(params: ParamsLike, k: int) -> float:
    """Probability of exactly ``k`` events."""
    lam = as_params(params).lam
    integral = isinstance(k, numbers.Integral) or (
        isinstance(k, float) and k.is_integer()
    )
    if isinstance(k, bool) or not integral:
        raise DomainError(f"event count must be an integer, got {k!r}")
    k = int(k)
    if k < 0:
        raise DomainError(f"event count must be non-negative, got {k}")
    if lam == 0.0:
        return 1.0 if k == 0 else 0.0
    if lam > LOG_SPACE_THRESHOLD or k > LOG_SPACE_THRESHOLD:
        return math.exp(_log_term(lam, k))
    term = math.exp(-lam)
    for j in range(1, k + 1):
        term *= lam / j
    return term


def cdf(params: ParamsLike, k: float) -> float:
    """``P(X <= floor(k))``."""
    lam = as_params(params).lam
    n = _count_floor(k)
    if lam == 0.0:
        return 1.0
    return min(1.0, math.fsum(_terms(lam, n)))


def survival(params: ParamsLike, k: float, config: NumericsConfig = DEFAULT_CONFIG) -> float:
    """``P(X > floor(k))``.

    When the head holds more than half the mass the tail is summed directly, so
    small survival probabilities keep their relative precision.
    """
    lam = as_params(params).lam
    n = _count_floor(k)
    if lam == 0.0:
        return 0.0
    terms = _terms(lam, n + 1)
    head = min(1.0, math.fsum(terms[:-1]))
    if head <= 0.5:
        return 1.0 - head
    tail = [terms[-1]]
    term = acc = terms[-1]
    j = n + 1
    tol = config.summation_tolerance
    while term > 0.0:
        j += 1
        term = term * lam / j
        tail.append(term)
        acc += term
        # past the mode the rest of the tail is dominated by a geometric series
        ratio = lam / (j + 1)
        if ratio < 1.0 and term * ratio <= tol * acc * (1.0 - ratio):
            break
    return max(0.0, min(1.0, math.fsum(tail)))


def quantile(params: ParamsLike, p: float, config: NumericsConfig = DEFAULT_CONFIG) -> int:
    """Smallest integer ``K`` with ``cdf(K) >= p``."""
    lam = as_params(params).lam
    if not (isinstance(p, numbers.Real) and math.isfinite(p)) or p < 0 or p >= 1:
        raise DomainError(f"quantile level must lie in [0, 1), got {p!r}")
    limit = config.upper_clamp(lam)
    if limit < lam:
        raise DomainError(f"quantile_upper_clamp {limit} lies below the rate {lam}")
    top = int(math.floor(limit))
    terms = _terms(lam, top)
    # prefix sums via fsum match cdf() bit for bit, and are monotone in K
    if min(1.0, math.fsum(terms)) < p:
        raise NumericalFailure(
            f"quantile search for p={p} exceeded the upper clamp {limit} at rate {lam}"
        )
    lo, hi = 0, top
    while lo < hi:
        mid = (lo + hi) // 2
        if min(1.0, math.fsum(terms[: mid + 1])) >= p:
            hi = mid
        else:
            lo = mid + 1
    return lo


def two_sigma_band(
    params: ParamsLike, config: NumericsConfig = DEFAULT_CONFIG
) -> tuple[float, float]:
    """``[max(0, lam - m*sqrt(lam)), lam + m*sqrt(lam)]`` with ``m = band_multiplier``."""
    lam = as_params(params).lam
    half = config.band_multiplier * math.sqrt(lam)
    return max(0.0, lam - half), lam + half


def clamped_survival(
    params: ParamsLike, k: float, config: NumericsConfig = DEFAULT_CONFIG
) -> float:
    """Survival with thresholds outside the band replaced by their limits:
    1 below the band, 0 above it, exact inside."""
    params = as_params(params)
    _count_floor(k)
    lo, hi = two_sigma_band(params, config)
    if k < lo:
        return 1.0
    if k > hi:
        return 0.0
    return survival(params, k, config)


def clamped_cdf(params: ParamsLike, k: float, config: NumericsConfig = DEFAULT_CONFIG) -> float:
    """Mirror of :func:`clamped_survival` for the cumulative form."""
    params = as_params(params)
    _count_floor(k)
    lo, hi = two_sigma_band(params, config)
    if k < lo:
        return 0.0
    if k > hi:
        return 1.0
    return cdf(params, k)


def clamp_error_bound(params: ParamsLike, config: NumericsConfig = DEFAULT_CONFIG) -> float:
    """Supremum over real ``k >= 0`` of the error the clamp introduces.

    This is the larger of the two exact tails just outside the band: the mass
    at or below the highest count under ``lo`` and the mass above ``floor(hi)``.
    The same bound holds for :func:`clamped_cdf`.
    """
    params = as_params(params)
    lo, hi = two_sigma_band(params, config)
    below = cdf(params, math.ceil(lo) - 1) if lo > 0 else 0.0
    above = survival(params, hi, config)
    return max(below, above)


__all__ = [
    "PoissonParams",
    "NumericsConfig",
    "DEFAULT_CONFIG",
    "as_params",
    "pmf",
    "cdf",
    "survival",
    "quantile",
    "two_sigma_band",
    "clamped_survival",
    "clamped_cdf",
    "clamp_error_bound",
]
