"""Numerical companions to the excess-risk theory.

Everything here either evaluates a closed-form bound or checks one by
Monte Carlo.  Universal constants (``L``, ``K``) are caller-supplied and
default to 1, so the returned numbers are bounds *up to a universal
constant*; only their shape is meaningful.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import InsufficientSamples, QuadratureFailure, SolvabilityViolated
from .robust_mean import CatoniParams, catoni_mean, phi, phi_prime

__all__ = [
    "SandwichReport",
    "BoundInputs",
    "BoundValue",
    "b_plus",
    "b_minus",
    "sandwich_diagnostic",
    "quadratic_roots",
    "catoni_term",
    "theorem1_bound",
    "theorem2_bound",
    "ball_covering_bound",
    "kmeans_log_covering",
    "dudley_integral",
]

MC_BAND = 4.0


def b_plus(mu, m: float, v: float, alpha: float, eps: float = 0.0):
    """Upper quadratic ``(m-mu) + alpha/2 (m-mu)^2 + alpha v/2 + eps``."""
    d = m - np.asarray(mu, dtype=float)
    out = d + 0.5 * alpha * d * d + 0.5 * alpha * v + eps
    return float(out) if out.ndim == 0 else out


def b_minus(mu, m: float, v: float, alpha: float, eps: float = 0.0):
    """Lower quadratic ``(m-mu) - alpha/2 (m-mu)^2 - alpha v/2 - eps``."""
    d = m - np.asarray(mu, dtype=float)
    out = d - 0.5 * alpha * d * d - 0.5 * alpha * v - eps
    return float(out) if out.ndim == 0 else out


@dataclass
class SandwichReport:
    mu_grid: list
    r_bar_estimates: list
    b_plus: list
    b_minus: list
    mu_plus: float
    mu_minus: float
    standard_errors: list = field(default_factory=list)
    mc_root: float = float("nan")
    mc_root_se: float = float("nan")

    def violations(self, band: float = MC_BAND) -> list[int]:
        """Grid indices where the Monte-Carlo estimate leaves the sandwich."""
        bad = []
        for i, (r, lo, hi, se) in enumerate(
            zip(self.r_bar_estimates, self.b_minus, self.b_plus, self.standard_errors)
        ):
            if not lo - band * se <= r <= hi + band * se:
                bad.append(i)
        return bad

    def root_in_interval(self, band: float = MC_BAND) -> bool:
        slack = band * self.mc_root_se
        return self.mu_minus - slack <= self.mc_root <= self.mu_plus + slack

    @property
    def holds(self) -> bool:
        return not self.violations() and self.root_in_interval()


def sandwich_diagnostic(
    loss_sampler: Callable[[np.random.Generator, int], np.ndarray],
    m: float,
    params: CatoniParams,
    mu_grid: Sequence[float],
    mc_samples: int,
    rng: np.random.Generator,
) -> SandwichReport:
    """Monte-Carlo check that the population Catoni score lies between B- and B+.

    ``loss_sampler(rng, size)`` draws from a law with mean ``m`` and variance
    at most ``params.v``.  The population score ``E phi(alpha (X - mu)) / alpha``
    is estimated from ``mc_samples`` draws; its root is compared with
    ``m -/+ alpha v``.
    """
    if mc_samples < 10_000:
        raise InsufficientSamples(f"need at least 1e4 Monte-Carlo draws, got {mc_samples}")
    if params.v is None:
        raise ValueError("params.v (variance bound) is required")
    alpha, v = params.alpha, params.v
    grid = np.asarray(mu_grid, dtype=float)
    if not np.all(np.isfinite(grid)):
        raise ValueError("mu_grid must be finite")

    x = np.asarray(loss_sampler(rng, mc_samples), dtype=float).ravel()
    root_est = catoni_mean(x, alpha).value
    scores = [phi(alpha * (x - mu)) / alpha for mu in grid]
    r_bar = [float(s.mean()) for s in scores]
    se = [float(s.std(ddof=1) / math.sqrt(x.size)) for s in scores]

    # delta-method standard error of the root of the empirical score
    z = alpha * (x - root_est)
    slope = float(phi_prime(z).mean())
    root_se = float((phi(z) / alpha).std(ddof=1) / math.sqrt(x.size) / slope)

    mu_minus, mu_plus = quadratic_roots(m, v, alpha, 0.0)
    return SandwichReport(
        mu_grid=grid.tolist(),
        r_bar_estimates=r_bar,
        b_plus=list(np.atleast_1d(b_plus(grid, m, v, alpha))),
        b_minus=list(np.atleast_1d(b_minus(grid, m, v, alpha))),
        mu_plus=mu_plus,
        mu_minus=mu_minus,
        standard_errors=se,
        mc_root=root_est,
        mc_root_se=root_se,
    )


def quadratic_roots(m: float, v: float, alpha: float, eps: float) -> tuple[float, float]:
    """Return ``(m - alpha v - 2 eps, m + alpha v + 2 eps)``.

    These bracket the relevant roots of B- and B+ whenever
    ``1 - alpha^2 v - 2 alpha eps >= 0``; the upper value is checked against
    the exact smallest root of B+ before returning.
    """
    disc = 1.0 - alpha * alpha * v - 2.0 * alpha * eps
    if disc < 0:
        raise SolvabilityViolated(f"1 - alpha^2 v - 2 alpha eps = {disc:.6g} < 0")
    mu_plus = m + alpha * v + 2.0 * eps
    mu_minus = m - alpha * v - 2.0 * eps
    # B+ as a polynomial in t = mu - m: alpha/2 t^2 - t + (alpha v/2 + eps)
    c = 0.5 * alpha * v + eps
    # stable form of (1 - sqrt(disc)) / alpha
    t_small = 2.0 * c / (1.0 + math.sqrt(disc))
    exact = m + t_small
    scale = 1.0 + abs(m) + abs(mu_plus)
    assert abs(b_plus(exact, m, v, alpha, eps)) <= 1e-9 * scale
    assert mu_plus >= exact - 1e-12 * scale
    return mu_minus, mu_plus


@dataclass(frozen=True)
class BoundInputs:
    alpha: float
    v: float
    n: int
    delta: float
    gamma2_d: float = 0.0
    gamma1_D: float = 0.0
    gamma2_quantile: float = 0.0
    diam_d: float = 0.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        for name in ("v", "gamma2_d", "gamma1_D", "gamma2_quantile", "diam_d"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if not 0 < self.delta < 1 / 3:
            raise ValueError("delta must lie in (0, 1/3)")


@dataclass(frozen=True)
class BoundValue:
    value: float
    catoni_term: float
    complexity_term: float
    condition_holds: bool


def catoni_term(alpha: float, v: float, n: int, delta: float) -> float:
    """``alpha v + 2 log(1/delta) / (n alpha)``."""
    return alpha * v + 2.0 * math.log(1.0 / delta) / (n * alpha)


def _bound(inputs: BoundInputs, complexity: float) -> BoundValue:
    base = 6.0 * catoni_term(inputs.alpha, inputs.v, inputs.n, inputs.delta)
    value = base + complexity
    holds = value <= 1.0 / inputs.alpha
    return BoundValue(value, base, complexity, holds)


def theorem1_bound(inputs: BoundInputs, constant_L: float = 1.0) -> BoundValue:
    """Excess-risk bound built from gamma_2(F, d) and gamma_1(F, D)."""
    n = inputs.n
    complexity = (
        constant_L
        * math.log(2.0 / inputs.delta)
        * (inputs.gamma2_d / math.sqrt(n) + inputs.gamma1_D / n)
    )
    return _bound(inputs, complexity)


def theorem2_bound(inputs: BoundInputs, constant_K: float = 1.0) -> BoundValue:
    """Excess-risk bound built from an empirical gamma_2 quantile and diam_d(F)."""
    complexity = (
        constant_K
        * max(inputs.gamma2_quantile, inputs.diam_d)
        * math.sqrt(math.log(8.0 / inputs.delta) / inputs.n)
    )
    return _bound(inputs, complexity)


def ball_covering_bound(rho: float, m: int, eps: float, k: Optional[int] = None) -> float:
    """``(4 rho / eps)^m`` covering bound for a Euclidean ball; ``^k`` for codebooks."""
    if m < 1:
        raise ValueError("dimension m must be >= 1")
    if eps <= 0:
        return math.inf
    if eps >= 4.0 * rho:
        return 1.0
    power = m * (k if k is not None else 1)
    return (4.0 * rho / eps) ** power


def kmeans_log_covering(rho: float, m: int, k: int = 1) -> Callable[[float], float]:
    """``eps -> log N`` for k codebook vectors in the radius-``rho`` ball."""

    def log_n(eps: float) -> float:
        if eps >= 4.0 * rho:
            return 0.0
        return k * m * math.log(4.0 * rho / eps)

    return log_n


def _simpson(a, b, fa, fm, fb):
    return (b - a) / 6.0 * (fa + 4.0 * fm + fb)


def dudley_integral(
    log_covering: Callable[[float], float],
    upper: float,
    beta_exponent: int = 2,
    rtol: float = 1e-6,
    max_depth: int = 60,
) -> float:
    """Entropy integral ``int_0^upper (log N(eps))^(1/beta) d eps``.

    The universal constant in front is not applied.  Integration runs in
    ``eps = upper * u**2`` so the typical logarithmic blow-up at 0 becomes a
    vanishing integrand, then adaptive Simpson is applied on u in [0, 1].
    """
    if beta_exponent not in (1, 2):
        raise ValueError("beta_exponent must be 1 or 2")
    if upper <= 0:
        return 0.0
    power = 1.0 / beta_exponent

    def g(u: float) -> float:
        if u <= 0.0:
            return 0.0
        val = max(float(log_covering(upper * u * u)), 0.0)
        if not math.isfinite(val):
            raise QuadratureFailure(f"log covering number not finite at eps={upper * u * u}")
        return 2.0 * upper * u * val ** power

    fa, fm, fb = g(0.0), g(0.5), g(1.0)
    whole = _simpson(0.0, 1.0, fa, fm, fb)
    # absolute floor keeps identically-zero integrands from recursing forever
    tol = rtol * max(abs(whole), 1e-300)
    budget = [200_000]

    def recurse(a, b, fa, fm, fb, whole, tol, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = g(lm), g(rm)
        left = _simpson(a, m, fa, flm, fm)
        right = _simpson(m, b, fm, frm, fb)
        delta = left + right - whole
        budget[0] -= 2
        if abs(delta) <= 15.0 * tol:
            return left + right + delta / 15.0
        if depth >= max_depth or budget[0] <= 0:
            raise QuadratureFailure("adaptive Simpson did not reach the requested tolerance")
        return recurse(a, m, fa, flm, fm, left, tol / 2, depth + 1) + recurse(
            m, b, fm, frm, fb, right, tol / 2, depth + 1
        )

    # force a few levels of splitting so a lucky coarse estimate is not accepted
    pieces = 16
    edges = np.linspace(0.0, 1.0, pieces + 1)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        a, b = float(a), float(b)
        ga, gm, gb = g(a), g(0.5 * (a + b)), g(b)
        total += recurse(a, b, ga, gm, gb, _simpson(a, b, ga, gm, gb), tol / pieces, 0)
    return total
