"""Conditional models p(y|x; alpha), exposed through score functions.

Two models are supported:

* ``linear-gaussian``: ``y = alpha^T x + z`` with ``z ~ N(0, s^2)`` and no
  intercept.  The score is taken as ``(y - alpha^T x) x``, i.e. without the
  ``1/s^2`` factor; roots of the estimating equations do not depend on it.
* ``logistic``: ``P(y=1|x) = sigmoid(alpha_0 + alpha_{1:}^T x)`` with an
  explicit intercept, so ``param_dim == d_x + 1``.

Functions taking a single sample (``score``, ``score_jacobian``) have batched
counterparts (``scores``, ``mean_score_jacobian``) used by the solvers.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, log_expit

from .errors import ContractViolation

LINEAR_GAUSSIAN = "linear-gaussian"
LOGISTIC = "logistic"
_KINDS = (LINEAR_GAUSSIAN, LOGISTIC)


@dataclass(frozen=True)
class ScoreModel:
    kind: str
    param_dim: int
    noise_scale: float = 1.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ContractViolation(f"unknown model kind {self.kind!r}; expected one of {_KINDS}")
        if self.param_dim < 1 or (self.kind == LOGISTIC and self.param_dim < 2):
            raise ContractViolation(f"invalid param_dim {self.param_dim} for {self.kind}")
        if not self.noise_scale > 0:
            raise ContractViolation("noise_scale must be positive")

    @classmethod
    def linear_gaussian(cls, d: int, noise_scale: float = 1.0) -> "ScoreModel":
        return cls(LINEAR_GAUSSIAN, d, noise_scale)

    @classmethod
    def logistic(cls, d_x: int) -> "ScoreModel":
        return cls(LOGISTIC, d_x + 1)

    @property
    def covariate_dim(self) -> int:
        return self.param_dim - 1 if self.kind == LOGISTIC else self.param_dim

    def design(self, X) -> np.ndarray:
        """Map raw covariates (n, d_x) to the regressors the parameter multiplies."""
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.covariate_dim:
            raise ContractViolation(
                f"covariates must have shape (n, {self.covariate_dim}), got {X.shape}"
            )
        if self.kind == LOGISTIC:
            return np.hstack([np.ones((X.shape[0], 1)), X])
        return X


def _check_alpha(model: ScoreModel, alpha) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape != (model.param_dim,):
        raise ContractViolation(f"alpha must have length {model.param_dim}, got shape {alpha.shape}")
    return alpha


def _check_y(y, n: int) -> np.ndarray:
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.shape[0] != n:
        raise ContractViolation(f"expected {n} responses, got {y.shape[0]}")
    return y


def scores(model: ScoreModel, X, y, alpha) -> np.ndarray:
    """Per-sample score vectors, shape (n, param_dim)."""
    Z = model.design(X)
    y = _check_y(y, Z.shape[0])
    alpha = _check_alpha(model, alpha)
    eta = Z @ alpha
    resid = y - eta if model.kind == LINEAR_GAUSSIAN else y - expit(eta)
    return resid[:, None] * Z


def score(model: ScoreModel, x, y, alpha) -> np.ndarray:
    """Score u(x, y; alpha) of a single sample."""
    return scores(model, np.atleast_1d(np.asarray(x, dtype=float))[None, :], [y], alpha)[0]


def curvature(model: ScoreModel, X, alpha) -> np.ndarray:
    """Per-sample scalar c_i with grad u_i = -c_i z_i z_i^T (z the design row)."""
    Z = model.design(X)
    if model.kind == LINEAR_GAUSSIAN:
        return np.ones(Z.shape[0])
    p = expit(Z @ _check_alpha(model, alpha))
    return p * (1.0 - p)


def score_jacobian(model: ScoreModel, x, y, alpha) -> np.ndarray:
    """Jacobian of the score in alpha for one sample; symmetric and NSD.

    ``y`` is accepted for interface symmetry; neither model's Jacobian uses it.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))[None, :]
    z = model.design(x)[0]
    c = curvature(model, x, alpha)[0]
    return -c * np.outer(z, z)


def mean_score_jacobian(model: ScoreModel, X, alpha, weights=None) -> np.ndarray:
    """(1/n) sum_i w_i grad u(x_i, y_i; alpha)."""
    Z = model.design(X)
    c = curvature(model, X, alpha)
    if weights is not None:
        c = c * np.asarray(weights, dtype=float)
    return -(Z * c[:, None]).T @ Z / Z.shape[0]


def log_likelihood(model: ScoreModel, x, y, alpha) -> float:
    """log p(y|x; alpha) for one sample.

    For the linear-Gaussian model the gradient of this is ``score / s**2``.
    """
    z = model.design(np.atleast_1d(np.asarray(x, dtype=float))[None, :])[0]
    eta = float(z @ _check_alpha(model, alpha))
    if model.kind == LINEAR_GAUSSIAN:
        s = model.noise_scale
        return -0.5 * ((y - eta) / s) ** 2 - np.log(s * np.sqrt(2.0 * np.pi))
    return float(log_expit(eta) if y == 1 else log_expit(-eta))
