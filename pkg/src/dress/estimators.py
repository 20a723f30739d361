"""Naive MLE, weighted MLE and DRESS (density-ratio weighted MLE)."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from . import density_ratio as dr
from .errors import ContractViolation, Divergence, DressError
from .model import LINEAR_GAUSSIAN, ScoreModel, curvature, scores
from .solver import SolverConfig, checked_solve, damped_newton


@dataclass(frozen=True)
class LabeledData:
    """Covariates ``x`` of shape (n, d_x) with responses ``y`` of shape (n,)."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if x.ndim != 2 or len(x) != len(y):
            raise ContractViolation(f"x {x.shape} and y {y.shape} disagree")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    def __len__(self):
        return len(self.y)


@dataclass
class FitResult:
    alpha_hat: np.ndarray
    weights_used: np.ndarray
    iterations: int
    final_residual: float
    theta_hat: np.ndarray | None = None
    ratio_fit: object = None
    info: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ParametricRatio:
    """Log-linear ratio fitted by moment matching with ``moment`` as eta."""

    basis: object = dr.PolyBasis(1)
    moment: dr.MomentFunction = dr.MomentFunction(dr.QIN)


@dataclass(frozen=True)
class KernelRatio:
    """KuLSIF ratio; ``bandwidth=None`` uses the median heuristic on the pooled sample."""

    bandwidth: float | None = None
    ridge: float = 1e-2
    cross_validate: bool = False
    seed: int = 0


def estimating_residual(model: ScoreModel, data: LabeledData, alpha, weights=None) -> np.ndarray:
    """(1/n) sum_i w_i u(x_i, y_i; alpha)."""
    U = scores(model, data.x, data.y, alpha)
    if weights is not None:
        U = U * np.asarray(weights, dtype=float)[:, None]
    return U.mean(axis=0)


def is_separable(Z: np.ndarray, y: np.ndarray) -> bool:
    """True when the labels are (quasi-)completely separated by a hyperplane in Z.

    Solves the feasibility problem  s_i z_i^T a >= 0 for all i,  sum_i s_i z_i^T a = 1
    with s_i = 2 y_i - 1.  A feasible ``a`` means the logistic likelihood has
    no finite maximiser.
    """
    S = (2.0 * y - 1.0)[:, None] * Z
    res = linprog(
        np.zeros(Z.shape[1]),
        A_ub=-S,
        b_ub=np.zeros(len(S)),
        A_eq=S.sum(axis=0)[None, :],
        b_eq=[1.0],
        bounds=[(None, None)] * Z.shape[1],
        method="highs",
    )
    return res.status == 0


def _check_inputs(model: ScoreModel, data: LabeledData, weights):
    if data.x.shape[1] != model.covariate_dim:
        raise ContractViolation(
            f"data has {data.x.shape[1]} covariates, model expects {model.covariate_dim}"
        )
    if len(data) < model.param_dim:
        raise ContractViolation(f"need at least {model.param_dim} labeled samples, got {len(data)}")
    w = np.ones(len(data)) if weights is None else np.asarray(weights, dtype=float).reshape(-1)
    if w.shape != (len(data),):
        raise ContractViolation(f"expected {len(data)} weights, got {w.shape}")
    if not np.all(w > 0):
        raise ContractViolation("weights must be strictly positive")
    if model.kind != LINEAR_GAUSSIAN and not np.all((data.y == 0) | (data.y == 1)):
        raise ContractViolation("logistic responses must be coded 0/1")
    return w


def weighted_mle(
    model: ScoreModel, data: LabeledData, weights=None, cfg: SolverConfig = SolverConfig()
) -> FitResult:
    """Root of (1/n) sum_i w_i u(x_i, y_i; alpha) = 0."""
    w = _check_inputs(model, data, weights)
    Z = model.design(data.x)
    if model.kind == LINEAR_GAUSSIAN:
        Zw = Z * w[:, None]
        alpha = checked_solve(Zw.T @ Z, Zw.T @ data.y, "weighted normal equations", "score")
        iterations = 1
    else:
        if is_separable(Z, data.y):
            raise Divergence("logistic labels are separable; the MLE does not exist", "score")

        def fun(a):
            return estimating_residual(model, data, a, w)

        def jac(a):
            c = curvature(model, data.x, a) * w
            return -(Z * c[:, None]).T @ Z / len(Z)

        res = damped_newton(fun, jac, np.zeros(model.param_dim), cfg, stage="score")
        alpha, iterations = res.x, res.iterations
    resid = float(np.max(np.abs(estimating_residual(model, data, alpha, w))))
    return FitResult(alpha, w, iterations, resid)


def mle(model: ScoreModel, data: LabeledData, cfg: SolverConfig = SolverConfig()) -> FitResult:
    """Naive MLE from the labeled sample alone."""
    return weighted_mle(model, data, None, cfg)


def fit_weights(labeled_x, unlabeled_x, ratio, cfg: SolverConfig = SolverConfig()):
    """Fit the density ratio and return (weights on labeled points, theta or None, fit)."""
    if isinstance(ratio, ParametricRatio):
        start = dr.zero_model(ratio.basis, np.asarray(labeled_x).shape[1])
        fit = dr.solve_ratio_moment(labeled_x, unlabeled_x, start, ratio.moment, cfg)
        return fit.model(labeled_x), fit.theta, fit
    if isinstance(ratio, KernelRatio):
        pooled = np.vstack([labeled_x, unlabeled_x])
        h = ratio.bandwidth or dr.median_bandwidth(pooled, seed=ratio.seed)
        lam = ratio.ridge
        if ratio.cross_validate:
            lam = dr.select_ridge_cv(labeled_x, unlabeled_x, h, seed=ratio.seed)
        fit = dr.kulsif_fit(labeled_x, unlabeled_x, h, lam)
        w = fit(labeled_x)
        return w / w.mean(), None, fit
    raise ContractViolation(f"unknown ratio specification {ratio!r}")


def dress(
    model: ScoreModel,
    data: LabeledData,
    unlabeled_x,
    ratio=ParametricRatio(),
    cfg: SolverConfig = SolverConfig(),
) -> FitResult:
    """Density-ratio weighted MLE.

    The ratio equation does not involve alpha, so the joint system is solved
    in two stages: the ratio from covariates alone, then the weighted score
    equation with the fitted weights.  Errors carry ``stage`` = "ratio" or
    "score".
    """
    unlabeled_x = np.asarray(unlabeled_x, dtype=float)
    if unlabeled_x.ndim == 1:
        unlabeled_x = unlabeled_x[:, None]
    try:
        w, theta, rfit = fit_weights(data.x, unlabeled_x, ratio, cfg)
    except DressError as exc:
        if getattr(exc, "stage", "ratio") is None:
            exc.stage = "ratio"
        raise
    res = weighted_mle(model, data, w, cfg)
    res.theta_hat = theta
    res.ratio_fit = rfit
    if theta is not None:
        res.info["ratio_residual"] = rfit.residual
        res.iterations += rfit.iterations
        res.final_residual = max(res.final_residual, rfit.residual)
    return res
