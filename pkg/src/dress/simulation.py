"""Monte Carlo harness for the regression and classification experiments.

Randomness: replication ``k`` of a run seeded with ``seed`` draws from
``numpy.random.Generator(PCG64(SeedSequence(seed, spawn_key=(k, stream))))``,
with separate streams for labeled data, unlabeled data and evaluation draws.
Each replication is a pure function of (config, k), so results do not depend
on execution order or thread count.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import expit, stdtr

from . import density_ratio as dr
from .asymptotics import diff_eta_phi, empirical_sandwich, ubar_samples, UbarSpec, ANALYTIC_REGRESSION
from .data import TabularDataset, split_ssl
from .errors import SOLVER_ERRORS, ContractViolation, DegenerateTest, ExperimentUnstable
from .estimators import KernelRatio, LabeledData, ParametricRatio, dress, fit_weights, mle
from .model import ScoreModel

LABELED_STREAM, UNLABELED_STREAM, EVAL_STREAM = 0, 1, 2
#: fraction of failed replications tolerated before a run is declared unstable
MAX_FAILURE_RATE = 0.05
_EVAL_KEY = 2**31


def replication_rng(seed: int, rep_index: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(rep_index, stream))))


def default_threads() -> int:
    env = os.environ.get("DRESS_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def parallel_map(fn, items, threads: int = 1) -> list:
    """``[fn(i) for i in items]``, optionally on a thread pool; order preserved."""
    items = list(items)
    if threads <= 1 or len(items) < 2:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def parse_ratio(ratio: str, eta: str = "qin", ridge: float = 1e-2, bandwidth=None):
    """'poly:L' or 'kulsif' plus an eta name ('naive' | 'qin') -> ratio spec."""
    ratio = ratio.strip().lower()
    if ratio == "kulsif":
        return KernelRatio(bandwidth=bandwidth, ridge=ridge)
    if ratio.startswith("poly:"):
        try:
            L = int(ratio.split(":", 1)[1])
        except ValueError:
            raise ContractViolation(f"bad polynomial degree in {ratio!r}") from None
        if L < 1:
            raise ContractViolation("polynomial degree must be at least 1")
        kinds = {"naive": dr.NAIVE, "qin": dr.QIN}
        if eta not in kinds:
            raise ContractViolation(f"eta must be one of {sorted(kinds)}, got {eta!r}")
        return ParametricRatio(dr.PolyBasis(L), dr.MomentFunction(kinds[eta]))
    raise ContractViolation(f"ratio must be 'poly:L' or 'kulsif', got {ratio!r}")


@dataclass(frozen=True)
class RegressionConfig:
    d: int = 2
    n: int = 500
    nprime: int = 5000
    sigma: float = 0.2
    eps: float = 0.0
    ratio: str = "poly:1"
    eta: str = "qin"
    reps: int = 200
    seed: int = 0
    ridge: float = 1e-2
    integrate_noise: bool = False

    def __post_init__(self):
        if min(self.d, self.n, self.nprime, self.reps) < 1:
            raise ContractViolation("d, n, nprime and reps must all be >= 1")
        if not self.sigma > 0 or self.eps < 0:
            raise ContractViolation("sigma must be positive and eps non-negative")
        parse_ratio(self.ratio, self.eta, self.ridge)

    def ratio_spec(self):
        return parse_ratio(self.ratio, self.eta, self.ridge)


def true_function(X, eps: float) -> np.ndarray:
    """f_eps(x) = 1^T x + eps ||x||^2 / d."""
    X = np.asarray(X, dtype=float)
    return X.sum(axis=1) + eps * (X**2).sum(axis=1) / X.shape[1]


@dataclass
class RegressionData:
    labeled: LabeledData
    unlabeled_x: np.ndarray


def gen_regression(config: RegressionConfig, rep_index: int) -> RegressionData:
    """x ~ N(0, I_d), y = f_eps(x) + N(0, sigma^2); unlabeled x' ~ N(0, I_d).

    Labeled and unlabeled draws use separate streams, so runs that differ only
    in n' share their labeled data and unlabeled prefixes.
    """
    rl = replication_rng(config.seed, rep_index, LABELED_STREAM)
    X = rl.standard_normal((config.n, config.d))
    y = true_function(X, config.eps) + config.sigma * rl.standard_normal(config.n)
    ru = replication_rng(config.seed, rep_index, UNLABELED_STREAM)
    U = ru.standard_normal((config.nprime, config.d))
    return RegressionData(LabeledData(X, y), U)


def model_error(eps: float, d: int) -> float:
    """min_alpha E|f_eps(x) - alpha^T x|^2 = eps^2 (d + 2) / d (attained at alpha = 1)."""
    if d < 1:
        raise ContractViolation("d must be >= 1")
    return eps**2 * (d + 2) / d


def delta(eps: float, n: int, sigma: float, d: int) -> float:
    """Model error over statistical error, sqrt(e(eps) n / (sigma^2 d))."""
    if not sigma > 0:
        raise ContractViolation("sigma must be positive")
    return float(np.sqrt(model_error(eps, d) * n / (sigma**2 * d)))


def eps_for_delta(target: float, n: int, sigma: float, d: int) -> float:
    if target < 0:
        raise ContractViolation("delta must be non-negative")
    return float(target / np.sqrt((d + 2) * n / (d * d * sigma**2)))


def test_mse(alpha, eps: float, d: int) -> float:
    """E_x (alpha^T x - f_eps(x))^2 = ||1 - alpha||^2 + eps^2 (d + 2) / d."""
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape != (d,):
        raise ContractViolation(f"alpha must have length {d}")
    return float(np.sum((1.0 - alpha) ** 2) + model_error(eps, d))


test_mse.__test__ = False  # not a pytest test


@dataclass(frozen=True)
class TTestResult:
    t: float
    p_one_tailed: float
    df: int


def t_sf(t: float, df: int) -> float:
    """Upper tail P(T > t) of Student's t with ``df`` degrees of freedom."""
    return float(stdtr(df, -t))


def paired_t_test(differences) -> TTestResult:
    """One-sample t test of mean(differences) > 0."""
    x = np.asarray(differences, dtype=float).reshape(-1)
    if len(x) < 2:
        raise ContractViolation("need at least two differences")
    sd = x.std(ddof=1)
    if sd == 0:
        raise DegenerateTest("differences have zero variance")
    t = x.mean() / (sd / np.sqrt(len(x)))
    return TTestResult(float(t), t_sf(t, len(x) - 1), len(x) - 1)


paired_t_test.__test__ = False


@dataclass
class ImprovementSummary:
    delta: float
    eps: float
    mean_improvement: float
    std_error: float
    p_value: float
    reps_used: int
    failures: list = field(default_factory=list)
    improvements: np.ndarray | None = field(default=None, repr=False)
    config: dict = field(default_factory=dict)

    def row(self) -> dict:
        return {
            "delta": self.delta,
            "eps": self.eps,
            "mean_improvement": self.mean_improvement,
            "std_error": self.std_error,
            "p_value": self.p_value,
            "reps_used": self.reps_used,
            "failures": len(self.failures),
            **self.config,
        }


def _check_failures(failures, reps):
    if len(failures) > MAX_FAILURE_RATE * reps:
        raise ExperimentUnstable(f"{len(failures)} of {reps} replications failed", failures)


def _improvement_rep(config: RegressionConfig, model, ratio, k):
    data = gen_regression(config, k)
    try:
        naive = mle(model, data.labeled)
        fitted = dress(model, data.labeled, data.unlabeled_x, ratio)
    except SOLVER_ERRORS as exc:
        return {"rep": k, "stage": getattr(exc, "stage", None), "error": f"{type(exc).__name__}: {exc}"}
    if config.integrate_noise:
        return config.n * _expected_gap(data.labeled.x, fitted.weights_used, config)
    gap = test_mse(naive.alpha_hat, config.eps, config.d) - test_mse(fitted.alpha_hat, config.eps, config.d)
    return config.n * gap


def _expected_gap(X, w, config: RegressionConfig) -> float:
    """E_z[MSE_naive - MSE_dress | covariates] for the linear-Gaussian model.

    Both estimators are linear in y, alpha = A (f + z), so the expectation over
    the response noise is ||1 - A f||^2 + sigma^2 tr(A A^T) for each.
    """
    f = true_function(X, config.eps)
    Xw = X * w[:, None]
    total = 0.0
    for A, sign in ((np.linalg.solve(X.T @ X, X.T), 1.0), (np.linalg.solve(Xw.T @ X, Xw.T), -1.0)):
        total += sign * (np.sum((1.0 - A @ f) ** 2) + config.sigma**2 * np.sum(A * A))
    return float(total)


def run_improvement_experiment(config: RegressionConfig, threads: int = 1) -> ImprovementSummary:
    """Replicate naive-vs-DRESS fits and summarise n * (MSE_naive - MSE_dress)."""
    model = ScoreModel.linear_gaussian(config.d, config.sigma)
    ratio = config.ratio_spec()
    out = parallel_map(lambda k: _improvement_rep(config, model, ratio, k), range(config.reps), threads)
    failures = [o for o in out if isinstance(o, dict)]
    _check_failures(failures, config.reps)
    imp = np.array([o for o in out if not isinstance(o, dict)])
    test = paired_t_test(imp)
    return ImprovementSummary(
        delta=delta(config.eps, config.n, config.sigma, config.d),
        eps=config.eps,
        mean_improvement=float(imp.mean()),
        std_error=float(imp.std(ddof=1) / np.sqrt(len(imp))),
        p_value=test.p_one_tailed,
        reps_used=len(imp),
        failures=failures,
        improvements=imp,
        config=asdict(config),
    )


@dataclass
class SandwichValidation:
    formula: np.ndarray
    rao_blackwell: np.ndarray
    plain: np.ndarray
    rel_error: float
    rel_error_plain: float
    reps_used: int
    eval_samples: int


def _rel_frobenius(est, ref) -> float:
    return float(np.linalg.norm(est - ref) / np.linalg.norm(ref))


def _sandwich_rep(config: RegressionConfig, ratio, k):
    data = gen_regression(config, k)
    X = data.labeled.x
    f = true_function(X, config.eps)
    try:
        w, _, _ = fit_weights(X, data.unlabeled_x, ratio)
    except SOLVER_ERRORS as exc:
        return {"rep": k, "stage": "ratio", "error": f"{type(exc).__name__}: {exc}"}
    # alpha = A (f + z): conditional on covariates, mean A f and covariance sigma^2 A A^T
    A0 = np.linalg.solve(X.T @ X, X.T)
    Xw = X * w[:, None]
    A1 = np.linalg.solve(Xw.T @ X, Xw.T)
    y = data.labeled.y
    return {
        "m0": A0 @ f,
        "m1": A1 @ f,
        "c": config.sigma**2 * (A0 @ A0.T - A1 @ A1.T),
        "a0": A0 @ y,
        "a1": A1 @ y,
    }


def sandwich_validation(
    config: RegressionConfig, eval_samples: int = 100_000, threads: int = 1
) -> SandwichValidation:
    """Compare n(sandwich_MLE - sandwich_DRESS) with the eta = phi improvement formula.

    Linear-Gaussian model with a polynomial ratio basis.  Two Monte Carlo
    estimates are returned: ``plain`` uses the fitted parameters directly,
    ``rao_blackwell`` integrates the Gaussian response noise out exactly
    given each replication's covariates (same expectation, smaller variance).
    """
    ratio = config.ratio_spec()
    if not isinstance(ratio, ParametricRatio):
        raise ContractViolation("sandwich validation needs a polynomial ratio basis")
    d, n = config.d, config.n
    model = ScoreModel.linear_gaussian(d, config.sigma)
    out = parallel_map(lambda k: _sandwich_rep(config, ratio, k), range(config.reps), threads)
    failures = [o for o in out if "error" in o]
    _check_failures(failures, config.reps)
    ok = [o for o in out if "error" not in o]

    Xe = replication_rng(config.seed, _EVAL_KEY, EVAL_STREAM).standard_normal((eval_samples, d))
    alpha_star = np.ones(d)
    spec = UbarSpec(ANALYTIC_REGRESSION, alpha_star, f=lambda X: true_function(X, config.eps))
    report = diff_eta_phi(ubar_samples(spec, Xe), ratio.basis(Xe), n, config.nprime)

    plain = empirical_sandwich(model, [o["a0"] for o in ok], alpha_star, Xe, n) - empirical_sandwich(
        model, [o["a1"] for o in ok], alpha_star, Xe, n
    )
    H = -Xe.T @ Xe / eval_samples
    m0 = np.array([o["m0"] for o in ok])
    m1 = np.array([o["m1"] for o in ok])
    C = np.mean([o["c"] for o in ok], axis=0) + np.cov(m0, rowvar=False) - np.cov(m1, rowvar=False)
    rb = n * H @ C @ H.T
    rb = 0.5 * (rb + rb.T)
    return SandwichValidation(
        report.diff_matrix,
        rb,
        plain,
        _rel_frobenius(rb, report.diff_matrix),
        _rel_frobenius(plain, report.diff_matrix),
        len(ok),
        eval_samples,
    )


@dataclass(frozen=True)
class ClassificationConfig:
    n: int = 800
    nprime: int = 2000
    D: int = 20
    splits: int = 50
    seed: int = 0
    ridge: float = 1e-2
    bandwidth: float | None = None


@dataclass
class ClassificationSummary:
    records: list
    failures: list
    dress_mean: float
    dress_sd: float
    mle_mean: float
    mle_sd: float
    p_value: float
    config: dict


def split_seed(seed: int, split: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=(split,)).generate_state(1)[0])


def misclassification(model: ScoreModel, alpha, data: LabeledData) -> float:
    p = expit(model.design(data.x) @ alpha)
    return float(np.mean((p > 0.5) != (data.y == 1)))


def _classification_split(ds, cfg: ClassificationConfig, k):
    s = split_ssl(ds, cfg.n, cfg.nprime, cfg.D, split_seed(cfg.seed, k))
    model = ScoreModel.logistic(cfg.D)
    try:
        naive = mle(model, s.labeled)
        fitted = dress(model, s.labeled, s.unlabeled_x, KernelRatio(cfg.bandwidth, cfg.ridge, seed=cfg.seed))
    except SOLVER_ERRORS as exc:
        return {"split": k, "stage": getattr(exc, "stage", None), "error": f"{type(exc).__name__}: {exc}"}
    return {
        "split": k,
        "dress_error": 100.0 * misclassification(model, fitted.alpha_hat, s.test),
        "mle_error": 100.0 * misclassification(model, naive.alpha_hat, s.test),
        "test_size": len(s.test),
    }


def run_classification(ds: TabularDataset, cfg: ClassificationConfig, threads: int = 1) -> ClassificationSummary:
    """Per-split test error (%) of DRESS with KuLSIF and of the MLE.

    The p-value is one-tailed for DRESS error < MLE error.
    """
    if cfg.splits < 2:
        raise ContractViolation("need at least two splits")
    split_ssl(ds, cfg.n, cfg.nprime, cfg.D, 0)  # validate sizes before fanning out
    out = parallel_map(lambda k: _classification_split(ds, cfg, k), range(cfg.splits), threads)
    failures = [o for o in out if "error" in o]
    _check_failures(failures, cfg.splits)
    recs = [o for o in out if "error" not in o]
    de = np.array([r["dress_error"] for r in recs])
    me = np.array([r["mle_error"] for r in recs])
    try:
        p = paired_t_test(me - de).p_one_tailed
    except DegenerateTest:
        p = float("nan")
    return ClassificationSummary(
        recs, failures, float(de.mean()), float(de.std(ddof=1)), float(me.mean()), float(me.std(ddof=1)), p, asdict(cfg)
    )
