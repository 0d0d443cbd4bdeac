"""Minimisation of Catoni's risk estimate over a parametric loss family.

The objective ``theta -> mu_hat(theta)`` is defined implicitly by
``sum_i phi(alpha * (loss_i(theta) - mu_hat)) = 0``.  Differentiating that
identity gives the gradient as a weighted average of per-record loss
gradients, with weights ``phi'(alpha * (loss_i - mu_hat))`` normalised to sum
to one.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence

import numpy as np

from .errors import DegenerateWeights, EmptySample, NoInitialPoints
from .robust_mean import _alpha_of, catoni_mean, catoni_value, phi_prime

__all__ = [
    "LossFamily",
    "OptimizerOptions",
    "ErmSolution",
    "catoni_risk",
    "catoni_weights",
    "catoni_risk_gradient",
    "minimize_catoni",
    "vanilla_risk",
]


@dataclass(frozen=True)
class LossFamily:
    """Vectorised loss family.

    ``loss(theta, data)`` returns the n per-record losses (all >= 0) and
    ``loss_gradient(theta, data)`` the (n, dim) matrix of their gradients.
    ``vanilla_fit(data)``, when given, supplies the default starting point.
    """

    loss: Callable[[np.ndarray, Any], np.ndarray]
    loss_gradient: Callable[[np.ndarray, Any], np.ndarray]
    dim: int
    vanilla_fit: Optional[Callable[[Any], np.ndarray]] = None


@dataclass
class OptimizerOptions:
    inits: Optional[Sequence[np.ndarray]] = None
    random_restarts: int = 4
    seed: Optional[int] = 0
    gtol: Optional[float] = None
    ftol: float = 1e-12
    stall_window: int = 5
    max_iter: int = 500
    armijo_c: float = 1e-4
    shrink: float = 0.5
    max_backtracks: int = 60


@dataclass
class ErmSolution:
    theta: np.ndarray
    catoni_risk: float
    trace: list = field(default_factory=list)
    converged: bool = False
    restart_index: int = 0
    iterations: int = 0


def _losses(theta, family, data) -> np.ndarray:
    return np.asarray(family.loss(np.asarray(theta, dtype=float), data), dtype=float)


def catoni_risk(theta, family: LossFamily, data, params) -> float:
    """Catoni's estimate of the mean loss at ``theta``."""
    return catoni_mean(_losses(theta, family, data), params).value


def vanilla_risk(theta, family: LossFamily, data) -> float:
    """Plain empirical mean of the losses at ``theta``."""
    losses = _losses(theta, family, data)
    if losses.size == 0:
        raise EmptySample("no records")
    return float(losses.mean())


def catoni_weights(losses: np.ndarray, mu: float, alpha: float) -> np.ndarray:
    """Normalised implicit-gradient weights; nonnegative and summing to one."""
    with np.errstate(over="ignore", invalid="ignore"):
        w = phi_prime(alpha * (np.asarray(losses, dtype=float) - mu))
    total = float(np.sum(w))
    if not (total > 0 and math.isfinite(total)):
        raise DegenerateWeights("all truncation derivatives vanish")
    return np.atleast_1d(w) / total


def catoni_risk_gradient(theta, family: LossFamily, data, params) -> np.ndarray:
    """Gradient of :func:`catoni_risk` by implicit differentiation."""
    theta = np.asarray(theta, dtype=float)
    alpha = _alpha_of(params)
    losses = _losses(theta, family, data)
    mu = catoni_mean(losses, alpha).value
    w = catoni_weights(losses, mu, alpha)
    return w @ np.asarray(family.loss_gradient(theta, data), dtype=float)


def _descend(theta0, family, data, alpha, opts: OptimizerOptions):
    """Gradient descent with Armijo backtracking from one starting point.

    The first trial step of each line search is the Barzilai-Borwein step
    (falling back to twice the last accepted step); the Armijo test keeps
    every accepted step a strict decrease.
    """
    theta = np.array(theta0, dtype=float)

    def objective(th):
        ls = _losses(th, family, data)
        return catoni_value(ls, alpha), ls

    f, ls = objective(theta)
    trace = [(0, f)]
    step = 1.0
    prev_theta = prev_g = None
    converged = False
    it = 0
    for it in range(1, opts.max_iter + 1):
        w = catoni_weights(ls, f, alpha)
        g = w @ np.asarray(family.loss_gradient(theta, data), dtype=float)
        gnorm2 = float(g @ g)
        gtol = opts.gtol if opts.gtol is not None else 1e-8 * (1.0 + abs(f))
        if math.sqrt(gnorm2) < gtol:
            converged = True
            it -= 1
            break
        if prev_g is not None:
            s = theta - prev_theta
            y = g - prev_g
            sy = float(s @ y)
            step = float(s @ s) / sy if sy > 0 else 2.0 * step
        accepted = False
        for _ in range(opts.max_backtracks):
            cand = theta - step * g
            f_new, ls_new = objective(cand)
            if f_new <= f - opts.armijo_c * step * gnorm2:
                accepted = True
                break
            step *= opts.shrink
        if not accepted:
            # no representable decrease along -g (kink or round-off floor)
            it -= 1
            break
        prev_theta, prev_g = theta, g
        theta, f, ls = cand, f_new, ls_new
        trace.append((it, f))
        if len(trace) > opts.stall_window:
            old = trace[-1 - opts.stall_window][1]
            if old - f < opts.ftol * (1.0 + abs(f)):
                converged = True
                break
    return theta, f, trace, converged, it


def minimize_catoni(
    family: LossFamily, data, params, opts: Optional[OptimizerOptions] = None
) -> ErmSolution:
    """Minimise Catoni's risk estimate from several starting points.

    Default starting points are ``family.vanilla_fit(data)`` plus
    ``opts.random_restarts`` Gaussian perturbations of it with scale
    ``0.1 * ||theta_0|| + 0.1``.  The best final iterate wins; ties go to the
    lower restart index.
    """
    opts = opts or OptimizerOptions()
    alpha = _alpha_of(params)
    if opts.inits is not None:
        inits = [np.asarray(t, dtype=float) for t in opts.inits]
    elif family.vanilla_fit is not None:
        inits = [np.asarray(family.vanilla_fit(data), dtype=float)]
    else:
        inits = []
    if not inits:
        raise NoInitialPoints("no starting points and no vanilla_fit to derive one")
    if opts.random_restarts > 0:
        rng = np.random.default_rng(opts.seed)
        base = inits[0]
        scale = 0.1 * float(np.linalg.norm(base)) + 0.1
        inits = inits + [
            base + scale * rng.standard_normal(base.shape) for _ in range(opts.random_restarts)
        ]

    best = None
    for idx, theta0 in enumerate(inits):
        theta, f, trace, converged, iters = _descend(theta0, family, data, alpha, opts)
        if best is None or f < best.catoni_risk:
            best = ErmSolution(theta, f, trace, converged, idx, iters)
    return best
