"""Linear L1 / L2 regression by Catoni risk minimisation and by plain ERM."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg

from .erm_core import ErmSolution, LossFamily, OptimizerOptions, minimize_catoni
from .errors import EmptySample, NonFiniteInput, SingularDesign

__all__ = [
    "RegressionData",
    "VarianceProxy",
    "variance_proxy_l1",
    "variance_proxy_l2",
    "linear_family",
    "fit_catoni",
    "fit_vanilla",
    "holdout_risk",
    "predict",
]


@dataclass(frozen=True)
class RegressionData:
    features: np.ndarray
    responses: np.ndarray

    def __post_init__(self):
        z = np.atleast_2d(np.asarray(self.features, dtype=float))
        y = np.asarray(self.responses, dtype=float).ravel()
        if y.size == 0:
            raise EmptySample("regression data needs at least one record")
        if z.shape[0] != y.size:
            raise ValueError(f"{z.shape[0]} feature rows but {y.size} responses")
        if not (np.all(np.isfinite(z)) and np.all(np.isfinite(y))):
            raise NonFiniteInput("regression data contains NaN or infinite values")
        object.__setattr__(self, "features", z)
        object.__setattr__(self, "responses", y)

    @property
    def n(self) -> int:
        return self.responses.size

    @property
    def dim(self) -> int:
        return self.features.shape[1]


def variance_proxy_l1(sigma_sq: float, sup_bound: float) -> float:
    """``2 sigma^2 + 2 Delta^2`` with ``E Y^2 <= sigma^2``."""
    if sigma_sq < 0 or sup_bound < 0:
        raise ValueError("inputs must be nonnegative")
    return 2.0 * sigma_sq + 2.0 * sup_bound**2


def variance_proxy_l2(sigma_sq: float, sup_bound: float) -> float:
    """``8 sigma^2 + 8 Delta^4`` with ``E Y^4 <= sigma^2``."""
    if sigma_sq < 0 or sup_bound < 0:
        raise ValueError("inputs must be nonnegative")
    return 8.0 * sigma_sq + 8.0 * sup_bound**4


@dataclass(frozen=True)
class VarianceProxy:
    sigma_sq: float
    sup_bound: float
    v: float

    @classmethod
    def l1(cls, sigma_sq: float, sup_bound: float) -> "VarianceProxy":
        return cls(sigma_sq, sup_bound, variance_proxy_l1(sigma_sq, sup_bound))

    @classmethod
    def l2(cls, sigma_sq: float, sup_bound: float) -> "VarianceProxy":
        return cls(sigma_sq, sup_bound, variance_proxy_l2(sigma_sq, sup_bound))


def predict(theta, features) -> np.ndarray:
    # row-wise sum instead of BLAS gemv so results do not depend on thread count
    return (np.asarray(features) * np.asarray(theta)).sum(axis=1)


def _check_exponent(p: int) -> None:
    if p not in (1, 2):
        raise ValueError(f"loss exponent must be 1 or 2, got {p!r}")


def linear_family(loss_exponent: int, dim: int) -> LossFamily:
    """Loss ``|y - z^T theta|^p`` for p in {1, 2} over linear predictors."""
    _check_exponent(loss_exponent)

    if loss_exponent == 2:

        def loss(theta, data):
            r = data.responses - predict(theta, data.features)
            return r * r

        def grad(theta, data):
            r = predict(theta, data.features) - data.responses
            return (2.0 * r)[:, None] * data.features

    else:

        def loss(theta, data):
            return np.abs(data.responses - predict(theta, data.features))

        def grad(theta, data):
            # np.sign(0) == 0: the zero subgradient at an exact fit
            r = predict(theta, data.features) - data.responses
            return np.sign(r)[:, None] * data.features

    return LossFamily(
        loss=loss,
        loss_gradient=grad,
        dim=dim,
        vanilla_fit=lambda data: fit_vanilla(data, loss_exponent),
    )


def _solve_normal(z: np.ndarray, y: np.ndarray, weights: Optional[np.ndarray] = None):
    zw = z if weights is None else z * weights[:, None]
    gram = zw.T @ z
    rhs = zw.T @ y
    # ill-conditioned Gram matrices get one ridge retry
    for ridge in (0.0, 1e-10 * np.trace(gram) / gram.shape[0]):
        a = gram + ridge * np.eye(gram.shape[0])
        try:
            c, low = linalg.cho_factor(a, check_finite=False)
        except linalg.LinAlgError:
            continue
        if np.min(np.abs(np.diag(c))) ** 2 <= 1e-14 * np.max(np.abs(np.diag(a))):
            continue
        return linalg.cho_solve((c, low), rhs, check_finite=False)
    raise SingularDesign("Gram matrix is singular even after ridge regularisation")


def fit_vanilla(data: RegressionData, loss_exponent: int = 2) -> np.ndarray:
    """Ordinary least squares (p=2) or least absolute deviations by IRLS (p=1)."""
    _check_exponent(loss_exponent)
    z, y = data.features, data.responses
    theta = _solve_normal(z, y)
    if loss_exponent == 2:
        return theta
    for _ in range(100):
        r = np.abs(y - predict(theta, z))
        w = 1.0 / np.maximum(r, 1e-8)
        new = _solve_normal(z, y, w)
        change = np.linalg.norm(new - theta) / max(np.linalg.norm(theta), 1e-300)
        theta = new
        if change < 1e-10:
            break
    return theta


def fit_catoni(
    data: RegressionData,
    loss_exponent: int,
    params,
    opts: Optional[OptimizerOptions] = None,
) -> ErmSolution:
    """Minimise Catoni's estimate of ``E|Y - Z^T theta|^p`` over theta."""
    family = linear_family(loss_exponent, data.dim)
    return minimize_catoni(family, data, params, opts)


def holdout_risk(theta, holdout: RegressionData, loss_exponent: int) -> float:
    """Sample average of ``|y' - z'^T theta|^p`` over an independent sample."""
    _check_exponent(loss_exponent)
    r = np.abs(holdout.responses - predict(theta, holdout.features))
    return float(np.mean(r * r if loss_exponent == 2 else r))
