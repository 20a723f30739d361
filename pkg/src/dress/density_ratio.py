"""Density-ratio models and estimators.

The parametric model is log-linear, ``w(x; theta) = exp(phi(x)^T theta)`` with
``phi_1 = 1``, and is fitted by moment matching

    (1/n) sum_i eta(x_i; theta) w(x_i; theta) - (1/n') sum_j eta(x'_j; theta) = 0

where ``x_i`` are the labeled (denominator) covariates and ``x'_j`` the
unlabeled (numerator) ones.  The nonparametric option is the kernel
unconstrained least-squares importance fit (KuLSIF) with a Gaussian kernel.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import solve as _spd_solve
from scipy.spatial.distance import cdist, pdist

from .errors import ContractViolation, SingularSystem
from .solver import MAX_CONDITION, SolverConfig, damped_newton

#: lower clamp applied to fitted kernel ratio values
WEIGHT_FLOOR = 1e-3
#: exponent cap that keeps exp(phi^T theta) finite during line search
_MAX_EXPONENT = 700.0


def _as_2d(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ContractViolation(f"covariates must be a 2-d array, got shape {X.shape}")
    return X


def poly_basis(x, L: int) -> np.ndarray:
    """(1, x, x**2, ..., x**L) with elementwise powers; length L*d + 1."""
    return poly_features(np.atleast_1d(np.asarray(x, dtype=float))[None, :], L)[0]


def poly_features(X, L: int) -> np.ndarray:
    if int(L) != L or L < 1:
        raise ContractViolation(f"polynomial degree must be a positive integer, got {L}")
    X = _as_2d(X)
    return np.hstack([np.ones((X.shape[0], 1))] + [X**k for k in range(1, int(L) + 1)])


@dataclass(frozen=True)
class PolyBasis:
    """Callable basis ``X -> poly_features(X, degree)``."""

    degree: int

    def __call__(self, X) -> np.ndarray:
        return poly_features(X, self.degree)

    def dim(self, d: int) -> int:
        return self.degree * d + 1


@dataclass(frozen=True)
class RatioModel:
    """Log-linear ratio model; ``basis`` maps (n, d) covariates to (n, r)."""

    basis: Callable[[np.ndarray], np.ndarray]
    theta: np.ndarray

    def features(self, X) -> np.ndarray:
        Phi = np.asarray(self.basis(_as_2d(X)), dtype=float)
        if Phi.shape[1] != len(self.theta):
            raise ContractViolation(
                f"basis has {Phi.shape[1]} functions but theta has length {len(self.theta)}"
            )
        if not np.all(Phi[:, 0] == 1.0):
            raise ContractViolation("the first basis function must be identically 1")
        return Phi

    def with_theta(self, theta) -> "RatioModel":
        return RatioModel(self.basis, np.asarray(theta, dtype=float))

    def __call__(self, X) -> np.ndarray:
        return _exp_linear(self.features(X), self.theta)


def _exp_linear(Phi: np.ndarray, theta: np.ndarray) -> np.ndarray:
    return np.exp(np.minimum(Phi @ theta, _MAX_EXPONENT))


def zero_model(basis, d: int) -> RatioModel:
    """Ratio model at theta = 0 for a basis applied to d-dimensional covariates."""
    r = np.asarray(basis(np.zeros((1, d)))).shape[1]
    return RatioModel(basis, np.zeros(r))


def eval_ratio(model: RatioModel, x) -> float:
    return float(model(np.atleast_1d(np.asarray(x, dtype=float))[None, :])[0])


NAIVE = "naive-phi"
QIN = "qin-optimal"
CUSTOM = "custom-phitilde"


@dataclass(frozen=True)
class MomentFunction:
    """The test function eta(x; theta) of the moment-matching equation.

    ``custom-phitilde`` uses ``eta = phi + phitilde`` where ``phitilde`` maps
    (n, d) covariates to (n, r) and should be orthogonal to span(phi).
    """

    kind: str = QIN
    phitilde: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if self.kind not in (NAIVE, QIN, CUSTOM):
            raise ContractViolation(f"unknown moment function {self.kind!r}")
        if (self.kind == CUSTOM) != (self.phitilde is not None):
            raise ContractViolation("phitilde must be given exactly for custom-phitilde")


def _moment_parts(mf, Phi, X, theta, n, nprime):
    """eta values at theta (theta is unused by the theta-free moment functions)."""
    if mf.kind == NAIVE:
        return Phi
    if mf.kind == CUSTOM:
        return Phi + np.asarray(mf.phitilde(X), dtype=float)
    w = _exp_linear(Phi, theta)
    # n / (n + n' w) rather than 1 / (1 + (n'/n) w): exact at w = 1
    return Phi * (n / (n + nprime * w))[:, None]


def moment_values(mf: MomentFunction, model: RatioModel, X, n: int, nprime: int) -> np.ndarray:
    """eta(x; theta) for every row of X, shape (len(X), r)."""
    if n < 1 or nprime < 1:
        raise ContractViolation("sample counts must be positive")
    X = _as_2d(X)
    return _moment_parts(mf, model.features(X), X, model.theta, n, nprime)


def eval_moment(mf: MomentFunction, model: RatioModel, x, n: int, nprime: int) -> np.ndarray:
    return moment_values(mf, model, np.atleast_1d(np.asarray(x, dtype=float))[None, :], n, nprime)[0]


class _MomentEquation:
    """Residual and analytic theta-Jacobian of the moment-matching equation."""

    def __init__(self, mf, Phi_l, Phi_u, X_l, X_u):
        self.mf = mf
        self.Phi_l, self.Phi_u = Phi_l, Phi_u
        self.n, self.nprime = len(Phi_l), len(Phi_u)
        self.rho = self.nprime / self.n
        if mf.kind != QIN:
            self.eta_l = _moment_parts(mf, Phi_l, X_l, None, self.n, self.nprime)
            self.eta_u_mean = _moment_parts(mf, Phi_u, X_u, None, self.n, self.nprime).mean(axis=0)

    def residual(self, theta):
        w_l = _exp_linear(self.Phi_l, theta)
        if self.mf.kind != QIN:
            return (self.eta_l * w_l[:, None]).mean(axis=0) - self.eta_u_mean
        w_u = _exp_linear(self.Phi_u, theta)
        lhs = (self.Phi_l * (w_l / (1.0 + self.rho * w_l))[:, None]).mean(axis=0)
        rhs = (self.Phi_u / (1.0 + self.rho * w_u)[:, None]).mean(axis=0)
        return lhs - rhs

    def jacobian(self, theta):
        w_l = _exp_linear(self.Phi_l, theta)
        if self.mf.kind != QIN:
            return (self.eta_l * w_l[:, None]).T @ self.Phi_l / self.n
        w_u = _exp_linear(self.Phi_u, theta)
        c_l = w_l / (1.0 + self.rho * w_l) ** 2
        c_u = self.rho * w_u / (1.0 + self.rho * w_u) ** 2
        return (self.Phi_l * c_l[:, None]).T @ self.Phi_l / self.n + (
            self.Phi_u * c_u[:, None]
        ).T @ self.Phi_u / self.nprime


@dataclass
class MomentFit:
    model: RatioModel
    iterations: int
    residual: float

    @property
    def theta(self) -> np.ndarray:
        return self.model.theta


def check_gram(Phi: np.ndarray, what: str = "basis Gram matrix", stage=None) -> float:
    """Raise SingularSystem when E[phi phi^T] over the rows of Phi is singular."""
    G = Phi.T @ Phi / len(Phi)
    cond = np.linalg.cond(G)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise SingularSystem(f"{what} is singular (condition number {cond:.3g})", cond, stage)
    return cond


def moment_residual(labeled_x, unlabeled_x, model: RatioModel, mf: MomentFunction) -> np.ndarray:
    """Left-hand side of the moment-matching equation at ``model.theta``."""
    X_l, X_u = _as_2d(labeled_x), _as_2d(unlabeled_x)
    eq = _MomentEquation(mf, model.features(X_l), model.features(X_u), X_l, X_u)
    return eq.residual(model.theta)


def solve_ratio_moment(
    labeled_x,
    unlabeled_x,
    model: RatioModel,
    mf: MomentFunction = MomentFunction(),
    cfg: SolverConfig = SolverConfig(),
) -> MomentFit:
    """Fit theta by damped Newton on the moment equation, starting from 0."""
    X_l, X_u = _as_2d(labeled_x), _as_2d(unlabeled_x)
    if len(X_l) < 1 or len(X_u) < 1:
        raise ContractViolation("both samples must be non-empty")
    Phi_l, Phi_u = model.features(X_l), model.features(X_u)
    check_gram(np.vstack([Phi_l, Phi_u]), "pooled basis Gram matrix", stage="ratio")
    eq = _MomentEquation(mf, Phi_l, Phi_u, X_l, X_u)
    res = damped_newton(eq.residual, eq.jacobian, np.zeros(Phi_l.shape[1]), cfg, stage="ratio")
    return MomentFit(model.with_theta(res.x), res.iterations, res.residual)


def gaussian_kernel(A, B, bandwidth: float) -> np.ndarray:
    return np.exp(-cdist(_as_2d(A), _as_2d(B), "sqeuclidean") / (2.0 * bandwidth**2))


@dataclass
class KernelRatioFit:
    """Kernel expansion ``w(x) = sum_k c_k k(x, center_k)`` with a lower clamp."""

    centers: np.ndarray
    coefficients: np.ndarray
    bandwidth: float
    ridge: float
    floor: float = WEIGHT_FLOOR
    condition: float = float("nan")
    normal_residual: float = float("nan")
    warnings: list = field(default_factory=list)

    def raw(self, X) -> np.ndarray:
        return gaussian_kernel(X, self.centers, self.bandwidth) @ self.coefficients

    def __call__(self, X) -> np.ndarray:
        return np.maximum(self.raw(X), self.floor)


def kulsif_fit(labeled_x, unlabeled_x, bandwidth: float, ridge: float = 1e-2) -> KernelRatioFit:
    """Kernel unconstrained least-squares importance fit.

    Minimises ``(1/2n) sum_i w(x_i)^2 - (1/n') sum_j w(x'_j) + (ridge/2) ||w||^2``
    over the Gaussian RKHS.  The minimiser is an expansion over the distinct
    pooled points.  Writing ``a_k, b_k`` for the labeled/unlabeled
    multiplicities of point k, stationarity gives ``c_k = b_k / (n' ridge)``
    at points with ``a_k = 0`` and, on the labeled points L,

        (K_LL + ridge * diag(n / a_L)) c_L = (n / n') b_L / a_L - K_LU c_U

    which is symmetric positive definite.
    """
    if not ridge > 0 or not bandwidth > 0:
        raise ContractViolation("ridge and bandwidth must be positive")
    X_l, X_u = _as_2d(labeled_x), _as_2d(unlabeled_x)
    n, nprime = len(X_l), len(X_u)
    if n < 1 or nprime < 1:
        raise ContractViolation("both samples must be non-empty")
    centers, inverse = np.unique(np.vstack([X_l, X_u]), axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    m = len(centers)
    a = np.bincount(inverse[:n], minlength=m).astype(float)
    b = np.bincount(inverse[n:], minlength=m).astype(float)
    on_l = a > 0
    coef = np.zeros(m)
    coef[~on_l] = b[~on_l] / (nprime * ridge)

    K_lc = gaussian_kernel(centers[on_l], centers, bandwidth)
    K_ll = K_lc[:, on_l]
    M = K_ll + np.diag(ridge * n / a[on_l])
    rhs = (n / nprime) * b[on_l] / a[on_l] - K_lc[:, ~on_l] @ coef[~on_l]
    c_l = _spd_solve(M, rhs, assume_a="pos")
    coef[on_l] = c_l

    cond = float(np.linalg.cond(M))
    resid = float(
        np.linalg.norm(M @ c_l - rhs)
        / max(np.linalg.norm(M, 2) * np.linalg.norm(c_l) + np.linalg.norm(rhs), np.finfo(float).tiny)
    )
    notes = []
    if cond > MAX_CONDITION:
        notes.append(f"ill-conditioned KuLSIF system (condition number {cond:.3g})")
    return KernelRatioFit(centers, coef, float(bandwidth), float(ridge), WEIGHT_FLOOR, cond, resid, notes)


def eval_kernel_ratio(fit: KernelRatioFit, x) -> float:
    return float(fit(np.atleast_1d(np.asarray(x, dtype=float))[None, :])[0])


def median_bandwidth(points, seed: int = 0, max_points: int = 1000) -> float:
    """Median pairwise Euclidean distance, on a seeded subsample of at most max_points."""
    X = _as_2d(points)
    if len(X) < 2 or np.all(X == X[0]):
        raise ContractViolation("median heuristic needs at least two distinct points")
    if len(X) > max_points:
        idx = np.random.default_rng(seed).choice(len(X), size=max_points, replace=False)
        X = X[np.sort(idx)]
    dist = pdist(X)
    h = float(np.median(dist))
    if h == 0.0:
        # mostly duplicated points; fall back to the distinct pairs
        h = float(np.median(dist[dist > 0]))
    return h


def lsif_objective(fit: KernelRatioFit, labeled_x, unlabeled_x) -> float:
    """Held-out least-squares criterion (1/2) mean w(x)^2 - mean w(x') on raw values."""
    return float(0.5 * np.mean(fit.raw(labeled_x) ** 2) - np.mean(fit.raw(unlabeled_x)))


def select_ridge_cv(
    labeled_x,
    unlabeled_x,
    bandwidth: float,
    grid=tuple(np.logspace(-4, 0, 9)),
    folds: int = 5,
    seed: int = 0,
) -> float:
    """Pick the ridge from ``grid`` minimising the held-out LSIF criterion."""
    X_l, X_u = _as_2d(labeled_x), _as_2d(unlabeled_x)
    if min(len(X_l), len(X_u)) < folds:
        raise ContractViolation("each sample needs at least one point per fold")
    rng = np.random.default_rng(seed)
    parts_l = np.array_split(rng.permutation(len(X_l)), folds)
    parts_u = np.array_split(rng.permutation(len(X_u)), folds)
    scores = []
    for lam in grid:
        total = 0.0
        for k in range(folds):
            tr_l = np.concatenate([p for i, p in enumerate(parts_l) if i != k])
            tr_u = np.concatenate([p for i, p in enumerate(parts_u) if i != k])
            fit = kulsif_fit(X_l[tr_l], X_u[tr_u], bandwidth, lam)
            total += lsif_objective(fit, X_l[parts_l[k]], X_u[parts_u[k]])
        scores.append(total / folds)
    return float(grid[int(np.argmin(scores))])
