import numpy as np
import pytest
import scipy.stats
from hypothesis import given, settings
from hypothesis import strategies as st

from dress import simulation as sim
from dress.errors import ContractViolation, DegenerateTest, ExperimentUnstable, SingularSystem
from dress.estimators import KernelRatio, ParametricRatio


def test_replication_rng_is_pure():
    a = sim.replication_rng(7, 3, 1).standard_normal(5)
    b = sim.replication_rng(7, 3, 1).standard_normal(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, sim.replication_rng(7, 3, 0).standard_normal(5))
    assert not np.array_equal(a, sim.replication_rng(7, 4, 1).standard_normal(5))


def test_generator_deterministic_and_streams_separate():
    cfg = sim.RegressionConfig(n=50, nprime=80, eps=0.1, seed=3)
    a, b = sim.gen_regression(cfg, 5), sim.gen_regression(cfg, 5)
    assert np.array_equal(a.labeled.x, b.labeled.x) and np.array_equal(a.labeled.y, b.labeled.y)
    assert np.array_equal(a.unlabeled_x, b.unlabeled_x)
    bigger = sim.gen_regression(sim.RegressionConfig(n=50, nprime=200, eps=0.1, seed=3), 5)
    assert np.array_equal(bigger.labeled.y, a.labeled.y)
    assert np.array_equal(bigger.unlabeled_x[:80], a.unlabeled_x)


def test_generator_noise_free_limit():
    cfg = sim.RegressionConfig(d=3, n=40, nprime=10, sigma=1e-12, eps=0.4)
    data = sim.gen_regression(cfg, 0)
    X = data.labeled.x
    expected = X.sum(1) + 0.4 * (X**2).sum(1) / 3
    np.testing.assert_allclose(data.labeled.y, expected, atol=1e-10)


def test_generator_mean_response():
    # E[y] = eps E||x||^2 / d = eps
    cfg = sim.RegressionConfig(d=2, n=200_000, nprime=1, sigma=0.2, eps=0.5)
    y = sim.gen_regression(cfg, 0).labeled.y
    se = y.std() / np.sqrt(len(y))
    assert abs(y.mean() - 0.5) < 4 * se


def test_model_error_examples_and_monte_carlo():
    assert sim.model_error(0.0, 4) == 0.0
    assert sim.model_error(0.1, 2) == pytest.approx(0.02, rel=1e-12)
    X = np.random.default_rng(0).standard_normal((1_000_000, 2))
    mc = np.mean((sim.true_function(X, 0.1) - X.sum(1)) ** 2)
    assert mc == pytest.approx(0.02, rel=0.01)


def test_delta_round_trip():
    # e = 0.02, so delta = sqrt(0.02 * 500 / (sigma^2 * 2))
    assert sim.delta(0.1, 500, 0.2, 2) == pytest.approx(np.sqrt(125.0), rel=1e-12)
    assert sim.delta(0.1, 500, 0.4, 2) == pytest.approx(5.5902, abs=1e-4)
    eps = sim.eps_for_delta(5.0, 500, 0.2, 2)
    assert eps == pytest.approx(0.044721, abs=1e-6)
    assert sim.delta(eps, 500, 0.2, 2) == pytest.approx(5.0, rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(
    target=st.floats(0, 20),
    n=st.integers(1, 10_000),
    sigma=st.floats(0.01, 5),
    d=st.integers(1, 10),
)
def test_eps_for_delta_inverts_delta(target, n, sigma, d):
    assert sim.delta(sim.eps_for_delta(target, n, sigma, d), n, sigma, d) == pytest.approx(target, abs=1e-9)


def test_test_mse_examples_and_monte_carlo():
    assert sim.test_mse(np.ones(2), 0.0, 2) == 0.0
    assert sim.test_mse(np.array([1.5, 1.0]), 0.1, 2) == pytest.approx(0.25 + 0.02)
    X = np.random.default_rng(1).standard_normal((1_000_000, 2))
    alpha = np.array([0.8, 1.3])
    mc = np.mean((X @ alpha - sim.true_function(X, 0.2)) ** 2)
    assert mc == pytest.approx(sim.test_mse(alpha, 0.2, 2), rel=0.01)
    with pytest.raises(ContractViolation):
        sim.test_mse(np.ones(3), 0.1, 2)


def test_paired_t_test_examples():
    r = sim.paired_t_test([1.0, -1.0])
    assert r.t == 0 and r.p_one_tailed == pytest.approx(0.5) and r.df == 1
    r = sim.paired_t_test([1.0, 2.0, 3.0])
    assert r.t == pytest.approx(2 * np.sqrt(3), rel=1e-12)
    ref = scipy.stats.ttest_1samp([1.0, 2.0, 3.0], 0.0, alternative="greater")
    assert r.p_one_tailed == pytest.approx(ref.pvalue, rel=1e-10)
    assert r.p_one_tailed == pytest.approx(0.0371, abs=1e-4)
    with pytest.raises(DegenerateTest):
        sim.paired_t_test([2.0, 2.0, 2.0])
    with pytest.raises(ContractViolation):
        sim.paired_t_test([1.0])


@settings(max_examples=50, deadline=None)
@given(t=st.floats(-30, 30), df=st.integers(1, 500))
def test_t_sf_matches_scipy_and_is_symmetric(t, df):
    assert sim.t_sf(t, df) == pytest.approx(scipy.stats.t.sf(t, df), rel=1e-9, abs=1e-300)
    assert sim.t_sf(t, df) + sim.t_sf(-t, df) == pytest.approx(1.0, abs=1e-12)


def test_parse_ratio():
    assert isinstance(sim.parse_ratio("poly:2"), ParametricRatio)
    assert sim.parse_ratio("poly:2").basis.degree == 2
    assert isinstance(sim.parse_ratio("kulsif", ridge=0.1), KernelRatio)
    for bad in ("poly:0", "poly:x", "gauss"):
        with pytest.raises(ContractViolation):
            sim.parse_ratio(bad)
    with pytest.raises(ContractViolation):
        sim.parse_ratio("poly:1", eta="custom")


def test_config_validation():
    with pytest.raises(ContractViolation):
        sim.RegressionConfig(reps=0)
    with pytest.raises(ContractViolation):
        sim.RegressionConfig(sigma=0.0)
    with pytest.raises(ContractViolation):
        sim.RegressionConfig(eps=-1.0)


def test_experiment_deterministic_and_thread_independent():
    cfg = sim.RegressionConfig(n=100, nprime=400, eps=0.05, reps=12, seed=4)
    a = sim.run_improvement_experiment(cfg)
    b = sim.run_improvement_experiment(cfg, threads=4)
    assert np.array_equal(a.improvements, b.improvements)
    assert a.row() == b.row()
    assert a.reps_used == 12 and a.row()["failures"] == 0


def test_integrated_noise_matches_plain_on_average():
    base = dict(n=100, nprime=1000, eps=0.1, reps=300, seed=2)
    plain = sim.run_improvement_experiment(sim.RegressionConfig(**base))
    rb = sim.run_improvement_experiment(sim.RegressionConfig(**base, integrate_noise=True))
    gap = abs(plain.mean_improvement - rb.mean_improvement)
    assert gap < 3 * np.hypot(plain.std_error, rb.std_error)
    assert rb.std_error < plain.std_error


def test_unstable_experiment_raises(monkeypatch):
    def broken(*args, **kwargs):
        raise SingularSystem("forced", 1e20, "ratio")

    monkeypatch.setattr(sim, "dress", broken)
    with pytest.raises(ExperimentUnstable) as info:
        sim.run_improvement_experiment(sim.RegressionConfig(n=30, nprime=30, reps=10))
    assert len(info.value.failures) == 10
    assert info.value.failures[0]["stage"] == "ratio"


def test_few_failures_are_tolerated(monkeypatch):
    real = sim.dress
    calls = {"k": 0}

    def flaky(*args, **kwargs):
        calls["k"] += 1
        if calls["k"] == 1:
            raise SingularSystem("forced", 1e20, "score")
        return real(*args, **kwargs)

    monkeypatch.setattr(sim, "dress", flaky)
    out = sim.run_improvement_experiment(sim.RegressionConfig(n=30, nprime=60, reps=40))
    assert out.reps_used == 39 and len(out.failures) == 1


def test_sandwich_validation_needs_parametric_ratio():
    with pytest.raises(ContractViolation):
        sim.sandwich_validation(sim.RegressionConfig(ratio="kulsif", reps=30), eval_samples=100)


def test_split_seed_distinct():
    seeds = {sim.split_seed(0, k) for k in range(100)}
    assert len(seeds) == 100
    assert sim.split_seed(5, 3) == sim.split_seed(5, 3)
