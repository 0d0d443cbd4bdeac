"""Catoni's M-estimator of the mean and the median-of-means baseline.

The estimator is the root in ``mu`` of

    r(mu) = 1/(n*alpha) * sum_i phi(alpha * (x_i - mu))

where ``phi`` is the logarithmic soft truncation below.  ``r`` is
non-increasing with slope in [-1, 0], so the root is unique and always lies
between the sample minimum and maximum.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .errors import (
    BadBlockCount,
    ConfidenceTooTightForN,
    ConvergenceError,
    EmptySample,
    NonFiniteInput,
    NonPositiveVariance,
    SampleTooSmall,
)

__all__ = [
    "CatoniParams",
    "MeanEstimate",
    "phi",
    "phi_prime",
    "catoni_mean",
    "alpha_simple",
    "alpha_fixed_confidence",
    "alpha_finite_class",
    "deviation_bound_fixed",
    "deviation_bound_simple",
    "median_of_means",
]

# above this |x| the polynomial x**2/2 overflows; use the asymptotic form
_BIG = 1e150
_LOG2 = math.log(2.0)
MAX_ITER = 200


def phi(x):
    """Soft truncation ``sign(x) * log(1 + |x| + x**2/2)``.

    Odd, non-decreasing and 1-Lipschitz.  Accepts scalars or arrays.
    """
    x = np.asarray(x, dtype=float)
    a = np.abs(x)
    with np.errstate(over="ignore"):
        out = np.log1p(a + 0.5 * a * a)
    big = a > _BIG
    if np.any(big):
        out = np.where(big, 2.0 * np.log(np.where(big, a, 1.0)) - _LOG2, out)
    out = np.copysign(out, x)
    return float(out) if out.ndim == 0 else out


def phi_prime(x):
    """Derivative of :func:`phi`, ``(1+|x|) / (1+|x|+x**2/2)``, in (0, 1]."""
    x = np.asarray(x, dtype=float)
    a = np.abs(x)
    with np.errstate(over="ignore"):
        out = 1.0 / (1.0 + 0.5 * a * a / (1.0 + a))
    return float(out) if out.ndim == 0 else out


def _phi_fast(z):
    # caller guarantees max|z| <= _BIG
    a = np.abs(z)
    return np.copysign(np.log1p(a + 0.5 * a * a), z)


@dataclass(frozen=True)
class CatoniParams:
    """Scale parameter ``alpha`` plus the inputs it was derived from.

    ``v`` (variance bound), ``delta`` (confidence) and ``n`` (sample size)
    are optional bookkeeping; only ``alpha`` enters the estimator.
    """

    alpha: float
    v: Optional[float] = None
    delta: Optional[float] = None
    n: Optional[int] = None

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and self.alpha > 0):
            raise ValueError(f"alpha must be positive and finite, got {self.alpha!r}")
        if self.v is not None and not self.v > 0:
            raise NonPositiveVariance(f"v must be positive, got {self.v!r}")
        if self.delta is not None and not 0 < self.delta < 1:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta!r}")
        if self.n is not None and self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n!r}")

    @classmethod
    def simple(cls, v: float, n: int) -> "CatoniParams":
        return cls(alpha_simple(v, n), v=v, n=n)

    @classmethod
    def fixed_confidence(cls, v: float, n: int, delta: float) -> "CatoniParams":
        return cls(alpha_fixed_confidence(v, n, delta), v=v, delta=delta, n=n)

    @classmethod
    def finite_class(cls, v: float, n: int, delta: float, class_size: float) -> "CatoniParams":
        return cls(alpha_finite_class(v, n, delta, class_size), v=v, delta=delta, n=n)


@dataclass(frozen=True)
class MeanEstimate:
    value: float
    iterations: int
    residual: float


def _as_sample(sample) -> np.ndarray:
    x = np.asarray(sample, dtype=float).ravel()
    if x.size == 0:
        raise EmptySample("cannot estimate the mean of an empty sample")
    if not np.all(np.isfinite(x)):
        raise NonFiniteInput("sample contains NaN or infinite values")
    return x


def _alpha_of(params) -> float:
    alpha = params.alpha if isinstance(params, CatoniParams) else float(params)
    if not (math.isfinite(alpha) and alpha > 0):
        raise ValueError(f"alpha must be positive and finite, got {alpha!r}")
    return alpha


def _solve(x: np.ndarray, alpha: float) -> tuple[float, int, float]:
    """Return (root, iterations, tolerance) for sum(phi(alpha*(x - mu))) = 0."""
    lo = float(x.min())
    hi = float(x.max())
    span = hi - lo
    tol = 1e-10 * (1.0 + span)
    if span == 0.0:
        return lo, 0, tol
    f_phi = _phi_fast if alpha * span <= _BIG else phi

    # bisection until the bracket is small, then safeguarded Newton
    switch = 1e-6 * span
    it = 0
    while hi - lo > switch:
        it += 1
        mid = 0.5 * (lo + hi)
        f = f_phi(alpha * (x - mid)).sum()
        if f > 0.0:
            lo = mid
        elif f < 0.0:
            hi = mid
        else:
            return mid, it, tol

    mu = 0.5 * (lo + hi)
    while it < MAX_ITER:
        it += 1
        z = alpha * (x - mu)
        f = f_phi(z).sum()
        if f == 0.0:
            return mu, it, tol
        if f > 0.0:
            lo = mu
        else:
            hi = mu
        step = f / (alpha * phi_prime(z).sum())
        new = mu + step
        if abs(step) <= 0.5 * tol:
            # a sub-tolerance Newton step leaves an error far below tol
            return min(max(new, lo), hi), it, tol
        if lo < new < hi:
            mu = new
        else:
            if hi - lo <= tol:
                return 0.5 * (lo + hi), it, tol
            mu = 0.5 * (lo + hi)
    raise ConvergenceError(f"root finder did not converge in {MAX_ITER} iterations")


def catoni_mean(sample, params: Union[CatoniParams, float]) -> MeanEstimate:
    """Catoni's mean estimate of ``sample``.

    ``params`` is a :class:`CatoniParams` or a bare ``alpha``.  The root is
    located to absolute tolerance ``1e-10 * (1 + max - min)``.
    """
    x = _as_sample(sample)
    alpha = _alpha_of(params)
    mu, it, _ = _solve(x, alpha)
    residual = abs(float(phi(alpha * (x - mu)).sum())) / (x.size * alpha)
    return MeanEstimate(value=mu, iterations=it, residual=residual)


def catoni_value(x: np.ndarray, alpha: float) -> float:
    """Unchecked fast path of :func:`catoni_mean` for trusted float arrays."""
    return _solve(x, alpha)[0]


def _check_v(v: float) -> None:
    if not v > 0:
        raise NonPositiveVariance(f"variance bound must be positive, got {v!r}")


def _log_inv(delta: float) -> float:
    if not 0 < delta <= 1:
        raise ValueError(f"delta must lie in (0, 1], got {delta!r}")
    return math.log(1.0 / delta)


def alpha_simple(v: float, n: int) -> float:
    """Confidence-free choice ``sqrt(2 / (n v))``."""
    _check_v(v)
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n!r}")
    return math.sqrt(2.0 / (n * v))


def _alpha_from_log(v: float, n: int, log_term: float) -> float:
    _check_v(v)
    if not n > 2.0 * log_term:
        raise ConfidenceTooTightForN(
            f"need n > 2*log(1/delta) = {2.0 * log_term:.6g}, got n={n}"
        )
    slack = 1.0 - (2.0 / n) * log_term
    return math.sqrt(2.0 * log_term / (n * (v + 2.0 * v * log_term / (n * slack))))


def alpha_fixed_confidence(v: float, n: int, delta: float) -> float:
    """Scale giving sub-Gaussian deviations at confidence level ``delta``."""
    return _alpha_from_log(v, n, _log_inv(delta))


def alpha_finite_class(v: float, n: int, delta: float, class_size: float) -> float:
    """Fixed-confidence scale with ``delta`` replaced by ``delta / class_size``."""
    if class_size < 1:
        raise ValueError(f"class_size must be >= 1, got {class_size!r}")
    return _alpha_from_log(v, n, _log_inv(delta) + math.log(class_size))


def deviation_bound_fixed(v: float, n: int, delta: float) -> float:
    """Half-width ``sqrt(2 v log(1/d) / (n (1 - 2 log(1/d) / n)))``."""
    _check_v(v)
    log_term = _log_inv(delta)
    if not n > 2.0 * log_term:
        raise ConfidenceTooTightForN(
            f"need n > 2*log(1/delta) = {2.0 * log_term:.6g}, got n={n}"
        )
    return math.sqrt(2.0 * v * log_term / (n * (1.0 - 2.0 * log_term / n)))


def deviation_bound_simple(v: float, n: int, delta: float) -> float:
    """Half-width ``(1 + log(1/delta)) * sqrt(v / n)`` for the simple scale."""
    _check_v(v)
    log_term = _log_inv(delta)
    if not n > 4.0 * (1.0 + log_term):
        raise SampleTooSmall(f"need n > 4*(1 + log(1/delta)), got n={n}")
    return (1.0 + log_term) * math.sqrt(v / n)


def median_of_means(sample, num_blocks: int) -> float:
    """Median of the means of ``num_blocks`` contiguous, near-equal blocks.

    Blocks are taken in sample order; shuffle beforehand for random blocks.
    """
    x = _as_sample(sample)
    if not 1 <= num_blocks <= x.size:
        raise BadBlockCount(f"num_blocks must lie in [1, {x.size}], got {num_blocks}")
    means = [block.mean() for block in np.array_split(x, num_blocks)]
    return float(np.median(means))
