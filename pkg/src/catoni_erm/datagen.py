"""Seeded generators for the heavy-tailed simulation designs.

Every replication owns a Philox (counter-based) stream whose key is a stable
64-bit hash of ``(master_seed, cell key, replication, purpose)``, so the
data of replication r never depends on which worker ran it or in what order.
"""
from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import BadTailIndex, NotPositiveDefinite
from .regression import RegressionData, predict

__all__ = [
    "ParetoSpec",
    "LinearModelSpec",
    "MixtureSpec",
    "stream_seed",
    "make_rng",
    "pareto_from_uniform",
    "pareto_draw",
    "equicorr_matrix",
    "equicorr_cholesky",
    "equicorr_gaussian",
    "gen_regression",
    "gen_mixture",
    "write_regression_csv",
    "read_regression_csv",
    "write_points_csv",
    "read_points_csv",
    "data_hash",
]

DEFAULT_THETA = (0.25, -0.25, 0.50, 0.70, -0.75)
DEFAULT_CENTERS = ((5.0, 5.0), (-5.0, 5.0), (-5.0, -5.0), (5.0, -5.0))


@dataclass(frozen=True)
class ParetoSpec:
    """Pareto law with unit scale on [1, inf) and tail index ``beta``."""

    beta: float
    recentered: bool = True

    def __post_init__(self):
        if not self.beta > 1:
            raise BadTailIndex(f"tail index must exceed 1 for a finite mean, got {self.beta!r}")

    @property
    def raw_mean(self) -> float:
        return self.beta / (self.beta - 1.0)

    @property
    def mean(self) -> float:
        return 0.0 if self.recentered else self.raw_mean

    @property
    def variance(self) -> float:
        b = self.beta
        return b / ((b - 1.0) ** 2 * (b - 2.0)) if b > 2 else math.inf

    def raw_moment(self, k: int) -> float:
        """``E X^k = beta / (beta - k)`` for the unshifted variable."""
        return self.beta / (self.beta - k) if self.beta > k else math.inf

    def central_moment(self, k: int) -> float:
        """``E (X - E X)^k`` by binomial expansion of the raw moments."""
        if self.beta <= k:
            return math.inf
        c = self.raw_mean
        return sum(
            math.comb(k, j) * self.raw_moment(j) * (-c) ** (k - j) for j in range(k + 1)
        )


@dataclass(frozen=True)
class LinearModelSpec:
    theta_star: tuple = DEFAULT_THETA
    corr: float = 0.9
    noise_scale: float = 1.0

    @property
    def dim(self) -> int:
        return len(self.theta_star)


@dataclass(frozen=True)
class MixtureSpec:
    beta: float
    centers: tuple = DEFAULT_CENTERS
    weights: tuple = field(default=())

    def __post_init__(self):
        if not self.weights:
            k = len(self.centers)
            object.__setattr__(self, "weights", tuple([1.0 / k] * k))
        if len(self.weights) != len(self.centers):
            raise ValueError("one weight per component is required")
        if abs(sum(self.weights) - 1.0) > 1e-12:
            raise ValueError("mixture weights must sum to 1")

    @property
    def k(self) -> int:
        return len(self.centers)

    @property
    def dim(self) -> int:
        return len(self.centers[0])


def stream_seed(master_seed: int, *key) -> int:
    """Stable 64-bit seed from a master seed and any printable key parts."""
    text = "|".join([str(int(master_seed))] + [str(part) for part in key])
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def pareto_from_uniform(u, spec: ParetoSpec):
    """Inverse CDF ``U^(-1/beta)`` for U in (0, 1], shifted when recentred."""
    x = np.asarray(u, dtype=float) ** (-1.0 / spec.beta)
    if spec.recentered:
        x = x - spec.raw_mean
    return float(x) if x.ndim == 0 else x


def pareto_draw(spec: ParetoSpec, rng: np.random.Generator, size=None):
    # 1 - U with U in [0, 1) keeps the uniform in (0, 1]
    return pareto_from_uniform(1.0 - rng.random(size), spec)


def equicorr_matrix(dim: int, corr: float) -> np.ndarray:
    return (1.0 - corr) * np.eye(dim) + corr * np.ones((dim, dim))


def equicorr_cholesky(dim: int, corr: float) -> np.ndarray:
    """Lower Cholesky factor of the equicorrelation matrix."""
    lower = -1.0 / (dim - 1) if dim > 1 else -math.inf
    if not lower < corr < 1:
        raise NotPositiveDefinite(f"corr={corr} outside ({lower}, 1) for dim={dim}")
    return np.linalg.cholesky(equicorr_matrix(dim, corr))


def equicorr_gaussian(dim: int, corr: float, rng: np.random.Generator, size=None):
    """Zero-mean unit-variance Gaussian vectors with equal pairwise correlation."""
    chol = equicorr_cholesky(dim, corr)
    shape = (dim,) if size is None else (size, dim)
    g = rng.standard_normal(shape)
    # explicit sum over the small axis keeps results BLAS-independent
    return (g[..., None, :] * chol).sum(axis=-1)


def gen_regression(
    spec: LinearModelSpec, pareto: ParetoSpec, n: int, rng: np.random.Generator
) -> RegressionData:
    """``Y = Z^T theta* + noise_scale * eps`` with recentred Pareto errors."""
    z = equicorr_gaussian(spec.dim, spec.corr, rng, size=n)
    eps = pareto_draw(pareto, rng, size=n)
    y = predict(np.asarray(spec.theta_star), z) + spec.noise_scale * eps
    return RegressionData(z, y)


def gen_mixture(spec: MixtureSpec, n: int, rng: np.random.Generator, return_labels=False):
    """Points from the equal-weight mixture, each coordinate with Pareto noise."""
    centers = np.asarray(spec.centers, dtype=float)
    labels = rng.choice(spec.k, size=n, p=np.asarray(spec.weights))
    noise = pareto_draw(ParetoSpec(spec.beta, recentered=True), rng, size=(n, spec.dim))
    points = centers[labels] + noise
    return (points, labels) if return_labels else points


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_regression_csv(path, data: RegressionData) -> None:
    cols = [f"z{j + 1}" for j in range(data.dim)] + ["y"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row, y in zip(data.features, data.responses):
            w.writerow([_fmt(v) for v in row] + [_fmt(y)])


def read_regression_csv(path) -> RegressionData:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], np.array(rows[1:], dtype=float)
    if "y" not in header:
        raise ValueError(f"{path}: no 'y' column")
    yi = header.index("y")
    zi = [i for i, name in enumerate(header) if name.startswith("z")]
    return RegressionData(body[:, zi], body[:, yi])


def write_points_csv(path, points: np.ndarray) -> None:
    points = np.atleast_2d(points)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{j + 1}" for j in range(points.shape[1])])
        for row in points:
            w.writerow([_fmt(v) for v in row])


def read_points_csv(path) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return np.array(rows[1:], dtype=float)


def data_hash(*arrays: Sequence) -> str:
    """Short content hash of float arrays (used to audit arm pairing)."""
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(np.asarray(a, dtype=float)).tobytes())
    return h.hexdigest()[:16]
