"""Asymptotic variance improvement of DRESS over the naive MLE.

All population expectations are replaced by means over an evaluation sample:
``ubar_samples`` (N, d) holds ubar(x_k), ``phi_samples`` (N, r) holds phi(x_k)
with a constant first column.  The diff routines centre ``ubar_samples``
(its population mean is zero) and use 1/N normalisation throughout, which
makes the closed forms below agree with the general expression to rounding
error on any sample.

With ``c = n'/(n+n')``, ``Pi ubar = B phi`` and ``Pi_perp ubar = ubar - Pi ubar``:

* general eta:  c E[ubar ubar^T] - (1/c) V[B eta - c ubar]
* eta = phi:    (n'-n)/n' E[Pi ubar (Pi ubar)^T]
* optimal eta:  c E[Pi_perp ubar (.)^T] + (n'-n)/n' E[Pi ubar (.)^T]
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ContractViolation, RankDeficient, SingularSystem
from .model import ScoreModel, mean_score_jacobian, scores
from .solver import MAX_CONDITION

#: singular values below this fraction of the largest count as zero
RANK_CUTOFF = 1e-10

ANALYTIC_REGRESSION = "analytic-regression"
MONTE_CARLO = "monte-carlo"


@dataclass(frozen=True)
class UbarSpec:
    """How to evaluate ubar(x) = E[u(x, y; alpha*) | x].

    analytic-regression: ``f`` is the true regression function (rows -> values)
    and ubar(x) = (f(x) - alpha*^T x) x.
    monte-carlo: ``sampler(x, m, rng)`` draws m responses from p(y|x) and ubar is
    the average score under ``model`` over those draws.
    """

    kind: str
    alpha_star: np.ndarray
    f: Callable[[np.ndarray], np.ndarray] | None = None
    sampler: Callable | None = None
    model: ScoreModel | None = None
    m: int = 10_000

    def __post_init__(self):
        if self.kind == ANALYTIC_REGRESSION and self.f is None:
            raise ContractViolation("analytic-regression needs f")
        if self.kind == MONTE_CARLO and (self.sampler is None or self.model is None):
            raise ContractViolation("monte-carlo needs sampler and model")
        if self.kind not in (ANALYTIC_REGRESSION, MONTE_CARLO):
            raise ContractViolation(f"unknown ubar kind {self.kind!r}")


def ubar_samples(spec: UbarSpec, X, rng: np.random.Generator | None = None) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    alpha = np.asarray(spec.alpha_star, dtype=float)
    if spec.kind == ANALYTIC_REGRESSION:
        resid = np.asarray(spec.f(X), dtype=float).reshape(-1) - X @ alpha
        return resid[:, None] * X
    rng = rng if rng is not None else np.random.default_rng(0)
    out = np.empty((len(X), spec.model.param_dim))
    for k, x in enumerate(X):
        ys = spec.sampler(x, spec.m, rng)
        out[k] = scores(spec.model, np.broadcast_to(x, (spec.m, len(x))), ys, alpha).mean(axis=0)
    return out


def ubar(spec: UbarSpec, x, rng: np.random.Generator | None = None) -> np.ndarray:
    return ubar_samples(spec, np.atleast_1d(np.asarray(x, dtype=float))[None, :], rng)[0]


@dataclass
class Projection:
    B: np.ndarray
    proj: np.ndarray
    resid: np.ndarray


def _gram(Phi: np.ndarray) -> np.ndarray:
    G = Phi.T @ Phi / len(Phi)
    cond = np.linalg.cond(G)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise SingularSystem(f"basis Gram matrix is singular (condition number {cond:.3g})", cond)
    return G


def project_ubar(ubar_samples, phi_samples) -> Projection:
    """Empirical L2 projection of each ubar component onto span(phi)."""
    U = np.asarray(ubar_samples, dtype=float)
    Phi = np.asarray(phi_samples, dtype=float)
    if U.ndim != 2 or Phi.ndim != 2 or len(U) != len(Phi):
        raise ContractViolation(f"sample shapes {U.shape} and {Phi.shape} disagree")
    G = _gram(Phi)
    # B = E[u phi^T] G^{-1}, computed as a solve with the symmetric G
    B = np.linalg.solve(G, Phi.T @ U / len(U)).T
    proj = Phi @ B.T
    return Projection(B, proj, U - proj)


def _second_moment(A: np.ndarray) -> np.ndarray:
    return A.T @ A / len(A)


def _covariance(A: np.ndarray) -> np.ndarray:
    return _second_moment(A - A.mean(axis=0))


def _symmetrize(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.T)


@dataclass
class ImprovementReport:
    diff_matrix: np.ndarray
    components: dict
    sample_size_used: int
    mode: str
    n: int
    nprime: int
    extra: dict = field(default_factory=dict)

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.diff_matrix).min())

    def to_dict(self) -> dict:
        def clean(v):
            return np.asarray(v).tolist() if isinstance(v, np.ndarray) else v

        return {
            "mode": self.mode,
            "n": self.n,
            "nprime": self.nprime,
            "sample_size_used": self.sample_size_used,
            "diff_matrix": self.diff_matrix.tolist(),
            "min_eigenvalue": self.min_eigenvalue(),
            "components": {k: clean(v) for k, v in self.components.items()},
            **{k: clean(v) for k, v in self.extra.items()},
        }


def _prepare(ubar_samples, phi_samples, n, nprime):
    if n < 1 or nprime < 1:
        raise ContractViolation("sample counts must be positive")
    U = np.asarray(ubar_samples, dtype=float)
    Phi = np.asarray(phi_samples, dtype=float)
    if Phi.ndim != 2 or not np.all(Phi[:, 0] == 1.0):
        raise ContractViolation("phi_samples must have a constant first column of ones")
    U = U - U.mean(axis=0)
    return U, Phi, project_ubar(U, Phi)


def _components(U, pr: Projection) -> dict:
    return {
        "E_ubar_ubar": _second_moment(U),
        "E_proj_proj": _second_moment(pr.proj),
        "E_resid_resid": _second_moment(pr.resid),
        "B": pr.B,
    }


def diff_general(ubar_samples, phi_samples, eta_samples, n: int, nprime: int) -> ImprovementReport:
    """Improvement for an arbitrary moment function.

    ``eta_samples`` must be normalised as eta(x; 0) = phi(x) + phitilde(x) with
    phitilde orthogonal to phi.  Qin's eta is a scalar multiple of phi and
    enters as ``phi_samples`` itself.
    """
    U, Phi, pr = _prepare(ubar_samples, phi_samples, n, nprime)
    Eta = np.asarray(eta_samples, dtype=float)
    if Eta.shape != Phi.shape:
        raise ContractViolation(f"eta samples {Eta.shape} must match phi samples {Phi.shape}")
    c = nprime / (n + nprime)
    comps = _components(U, pr)
    V = _covariance(Eta @ pr.B.T - c * U)
    D = c * comps["E_ubar_ubar"] - (1.0 + n / nprime) * V
    comps["V_Beta_minus_cubar"] = V
    return ImprovementReport(_symmetrize(D), comps, len(U), "general-eta", n, nprime)


def diff_eta_phi(ubar_samples, phi_samples, n: int, nprime: int) -> ImprovementReport:
    U, Phi, pr = _prepare(ubar_samples, phi_samples, n, nprime)
    comps = _components(U, pr)
    D = (nprime - n) / nprime * comps["E_proj_proj"]
    return ImprovementReport(_symmetrize(D), comps, len(U), "eta-equals-phi", n, nprime)


def _check_rank(U: np.ndarray, pr: Projection) -> None:
    """Rank of B, measured on Pi ubar relative to the scale of ubar.

    Phi has full column rank, so rank(Phi B^T) = rank(B); comparing against
    ubar keeps the cutoff meaningful when B is zero up to rounding.
    """
    d, r = pr.B.shape
    scale = np.linalg.svd(U, compute_uv=False).max() if U.size else 0.0
    sv = np.linalg.svd(pr.proj, compute_uv=False)
    rank = int(np.sum(sv > RANK_CUTOFF * scale)) if scale > 0 else 0
    if rank < d:
        # ubar is centred and phi_1 = 1, so rank(B) <= r - 1 always
        raise RankDeficient(
            f"B has numerical rank {rank} but the parameter dimension is {d} "
            f"(needs r >= d + 1, r = {r})",
            rank,
            d,
        )


@dataclass
class PhitildeResult:
    phitilde_samples: np.ndarray
    check: float


def optimal_phitilde(ubar_samples, phi_samples, n: int, nprime: int) -> PhitildeResult:
    """phitilde = c B^T (B B^T)^{-1} Pi_perp ubar, evaluated at the sample points."""
    U, Phi, pr = _prepare(ubar_samples, phi_samples, n, nprime)
    _check_rank(U, pr)
    c = nprime / (n + nprime)
    # rows: c * resid_k^T (B B^T)^{-1} B
    pt = c * np.linalg.solve(pr.B @ pr.B.T, pr.resid.T).T @ pr.B
    check = float(np.max(np.abs(pt @ pr.B.T - c * pr.resid))) if len(pt) else 0.0
    return PhitildeResult(pt, check)


def diff_optimal(ubar_samples, phi_samples, n: int, nprime: int) -> ImprovementReport:
    U, Phi, pr = _prepare(ubar_samples, phi_samples, n, nprime)
    _check_rank(U, pr)
    comps = _components(U, pr)
    c = nprime / (n + nprime)
    D = c * comps["E_resid_resid"] + (nprime - n) / nprime * comps["E_proj_proj"]
    return ImprovementReport(_symmetrize(D), comps, len(U), "optimal-phitilde", n, nprime)


def empirical_sandwich(
    model: ScoreModel, fits, alpha_star, eval_x, n: int, min_reps: int = 30
) -> np.ndarray:
    """n * E[grad u] Cov(alpha_hat) E[grad u]^T over replicated fits.

    ``fits`` holds FitResult objects or raw parameter vectors; ``eval_x`` is a
    large covariate sample for E[grad u] at ``alpha_star`` (neither model's
    Jacobian depends on y).
    """
    A = np.array([getattr(f, "alpha_hat", f) for f in fits], dtype=float)
    if len(A) < min_reps:
        raise ContractViolation(f"need at least {min_reps} replications, got {len(A)}")
    H = mean_score_jacobian(model, eval_x, alpha_star)
    C = np.cov(A, rowvar=False, ddof=1).reshape(model.param_dim, model.param_dim)
    return _symmetrize(n * H @ C @ H.T)
