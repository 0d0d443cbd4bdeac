"""k-means: plain Lloyd iterations and a Catoni-distortion variant.

The Catoni variant alternates nearest-centre assignment with a weighted
centroid step.  Weights are ``phi'(alpha * (d_i - D_hat))`` where ``d_i`` is
the current distortion of point i and ``D_hat`` the Catoni estimate of the
mean distortion; these are exactly the implicit-gradient weights of the
Catoni objective, so points with extreme distortion pull their centre less.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .erm_core import LossFamily, OptimizerOptions, minimize_catoni
from .errors import BadK, EmptyCodebook
from .robust_mean import alpha_fixed_confidence, alpha_simple, catoni_value, phi_prime

__all__ = [
    "Codebook",
    "DistortionEstimate",
    "assign",
    "point_distortions",
    "vanilla_distortion",
    "catoni_alpha",
    "catoni_distortion",
    "kmeans_plus_plus",
    "lloyd_vanilla",
    "lloyd_catoni",
    "catoni_kmeans_direct",
    "holdout_distortion",
]


@dataclass(frozen=True)
class Codebook:
    centers: np.ndarray
    exponent: int = 2
    rho_centers: Optional[float] = None

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.centers, dtype=float))
        if c.shape[0] < 1 or c.size == 0:
            raise EmptyCodebook("a codebook needs at least one centre")
        if self.exponent not in (1, 2):
            raise ValueError("distortion exponent must be 1 or 2")
        if self.rho_centers is not None:
            if not self.rho_centers > 0:
                raise ValueError("rho_centers must be positive")
            if np.any(np.linalg.norm(c, axis=1) > self.rho_centers * (1 + 1e-12)):
                raise ValueError("a centre lies outside the rho_centers ball")
        object.__setattr__(self, "centers", c)

    @property
    def k(self) -> int:
        return self.centers.shape[0]


@dataclass(frozen=True)
class DistortionEstimate:
    value: float
    method: str
    alpha_used: float = float("nan")


def _sq_dists(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - centers[None, :, :]
    return (diff * diff).sum(axis=-1)


def assign(points, codebook: Codebook) -> np.ndarray:
    """Index of the nearest centre per point; ties go to the lowest index."""
    if codebook.k < 1:
        raise EmptyCodebook("empty codebook")
    points = np.atleast_2d(np.asarray(points, dtype=float))
    return np.argmin(_sq_dists(points, codebook.centers), axis=1)


def point_distortions(points, codebook: Codebook) -> np.ndarray:
    points = np.atleast_2d(np.asarray(points, dtype=float))
    sq = _sq_dists(points, codebook.centers).min(axis=1)
    return sq if codebook.exponent == 2 else np.sqrt(sq)


def vanilla_distortion(points, codebook: Codebook) -> float:
    """Mean of ``min_j ||x_i - y_j||^exponent``."""
    return float(point_distortions(points, codebook).mean())


def catoni_alpha(n: int, k: int, V: float, delta: Optional[float] = None) -> float:
    """``sqrt(2 / (n k V))``, or the fixed-confidence scale for ``kV`` if delta given."""
    if delta is None:
        return alpha_simple(k * V, n)
    return alpha_fixed_confidence(k * V, n, delta)


def catoni_distortion(points, codebook: Codebook, V: float, delta=None) -> DistortionEstimate:
    d = point_distortions(points, codebook)
    alpha = catoni_alpha(d.size, codebook.k, V, delta)
    return DistortionEstimate(catoni_value(d, alpha), "catoni", alpha)


def kmeans_plus_plus(
    points, k: int, rng: np.random.Generator, exponent: int = 2, power: float = 1.0
) -> Codebook:
    """Seeding by sampling each new centre with probability ~ distance**power.

    ``power=1`` (the default) samples proportionally to distance; ``power=2``
    is classic k-means++.  Under heavy tails the squared weighting almost
    surely seeds a centre on the single most extreme point, which a Lloyd
    pass can never move away from, so linear weighting is preferred here.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n = points.shape[0]
    if not 1 <= k <= n:
        raise BadK(f"k must lie in [1, {n}], got {k}")
    if not power > 0:
        raise ValueError("power must be positive")
    idx = [int(rng.integers(n))]
    d2 = _sq_dists(points, points[idx]).min(axis=1)
    for _ in range(1, k):
        w = d2 if power == 2 else d2 ** (power / 2.0)
        total = w.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=w / total))
        else:
            nxt = int(rng.integers(n))
        idx.append(nxt)
        d2 = np.minimum(d2, _sq_dists(points, points[[nxt]])[:, 0])
    return Codebook(points[idx].copy(), exponent=exponent)


def _check_lloyd(points, k, init: Codebook):
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if not 1 <= k <= points.shape[0]:
        raise BadK(f"k must lie in [1, {points.shape[0]}], got {k}")
    if init.k != k:
        raise BadK(f"init codebook has {init.k} centres, expected {k}")
    if init.exponent != 2:
        raise ValueError("Lloyd iterations are defined for squared distortion only")
    return points


def _project(centers: np.ndarray, rho: Optional[float]) -> np.ndarray:
    if rho is None:
        return centers
    norms = np.linalg.norm(centers, axis=1)
    scale = np.where(norms > rho, rho / np.maximum(norms, 1e-300), 1.0)
    return centers * scale[:, None]


def lloyd_vanilla(points, k: int, init: Codebook, max_iter: int = 100, trace=None) -> Codebook:
    """Classic Lloyd iterations on squared distortion.

    An empty cluster is re-seeded at the point with the largest current
    distortion.  Per-iteration distortions are appended to ``trace`` if given.
    """
    points = _check_lloyd(points, k, init)
    centers = init.centers.copy()
    labels = None
    for _ in range(max_iter):
        sq = _sq_dists(points, centers)
        new_labels = np.argmin(sq, axis=1)
        d = sq[np.arange(len(points)), new_labels]
        if trace is not None:
            trace.append(float(d.mean()))
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(k):
            members = labels == j
            if members.any():
                centers[j] = points[members].mean(axis=0)
            else:
                far = int(np.argmax(d))
                centers[j] = points[far]
                d[far] = 0.0
        centers = _project(centers, init.rho_centers)
    return replace(init, centers=centers)


def lloyd_catoni(
    points,
    k: int,
    init: Codebook,
    V: float,
    max_iter: int = 100,
    delta: Optional[float] = None,
    trace=None,
) -> Codebook:
    """Weighted Lloyd iterations that decrease Catoni's distortion estimate.

    Stops after three consecutive iterations without a decrease above 1e-10,
    or at ``max_iter``; returns the iterate with the lowest estimate seen
    (the initial codebook included).  A cluster whose weights are all zero,
    or which is empty, keeps its previous centre.
    """
    points = _check_lloyd(points, k, init)
    n = points.shape[0]
    alpha = catoni_alpha(n, k, V, delta)
    rows = np.arange(n)

    centers = init.centers.copy()
    sq = _sq_dists(points, centers)
    labels = np.argmin(sq, axis=1)
    d = sq[rows, labels]
    score = catoni_value(d, alpha)
    best_score, best_centers = score, centers.copy()
    if trace is not None:
        trace.append(score)
    stalls = 0
    for _ in range(max_iter):
        w = phi_prime(alpha * (d - score))
        new = centers.copy()
        for j in range(k):
            members = labels == j
            wj = w[members]
            total = wj.sum()
            if total > 0:
                new[j] = (wj[:, None] * points[members]).sum(axis=0) / total
        centers = _project(new, init.rho_centers)
        sq = _sq_dists(points, centers)
        labels = np.argmin(sq, axis=1)
        d = sq[rows, labels]
        new_score = catoni_value(d, alpha)
        if trace is not None:
            trace.append(new_score)
        if new_score < best_score:
            best_score, best_centers = new_score, centers.copy()
        stalls = stalls + 1 if score - new_score <= 1e-10 else 0
        score = new_score
        if stalls >= 3:
            break
    return replace(init, centers=best_centers)


def catoni_kmeans_direct(points, k: int, init: Codebook, V: float, max_iter: int = 500) -> Codebook:
    """Gradient descent on Catoni's distortion over the flattened codebook.

    Slow; meant for cross-checking :func:`lloyd_catoni` on tiny instances.
    """
    points = _check_lloyd(points, k, init)
    n, m = points.shape
    rows = np.arange(n)

    def loss(theta, pts):
        return _sq_dists(pts, theta.reshape(k, m)).min(axis=1)

    def grad(theta, pts):
        c = theta.reshape(k, m)
        lab = np.argmin(_sq_dists(pts, c), axis=1)
        g = np.zeros((n, k, m))
        g[rows, lab] = 2.0 * (c[lab] - pts)
        return g.reshape(n, k * m)

    family = LossFamily(loss, grad, k * m)
    opts = OptimizerOptions(inits=[init.centers.ravel()], random_restarts=0, max_iter=max_iter)
    sol = minimize_catoni(family, points, catoni_alpha(n, k, V), opts)
    return replace(init, centers=sol.theta.reshape(k, m))


def holdout_distortion(codebook: Codebook, holdout_points) -> float:
    """Mean squared distance from held-out points to their nearest centre."""
    sq = _sq_dists(np.atleast_2d(np.asarray(holdout_points, dtype=float)), codebook.centers)
    return float(sq.min(axis=1).mean())
