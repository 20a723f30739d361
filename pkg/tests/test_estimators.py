import numpy as np
import pytest

from dress import density_ratio as dr
from dress.errors import Divergence, SingularSystem
from dress.estimators import (
    KernelRatio,
    LabeledData,
    ParametricRatio,
    dress,
    estimating_residual,
    is_separable,
    mle,
    weighted_mle,
)
from dress.model import ScoreModel

LIN1 = ScoreModel.linear_gaussian(1)


def logistic_data(rng, n=200, d=2):
    X = rng.normal(size=(n, d))
    p = 1 / (1 + np.exp(-(0.3 + X @ np.linspace(1, -1, d) + 0.5 * X[:, 0] ** 2)))
    return LabeledData(X, (rng.random(n) < p).astype(float))


def test_mle_exact_fit():
    fit = mle(LIN1, LabeledData([[1.0], [2.0]], [2.0, 4.0]))
    assert fit.alpha_hat[0] == pytest.approx(2.0, abs=1e-14)


def test_weighted_mle_hand_example():
    fit = weighted_mle(LIN1, LabeledData([[1.0], [1.0]], [0.0, 2.0]), [1.0, 3.0])
    assert fit.alpha_hat[0] == pytest.approx(1.5, abs=1e-14)


def test_weighted_least_squares_oracle(rng):
    X, y, w = rng.normal(size=(50, 3)), rng.normal(size=50), rng.uniform(0.1, 3, 50)
    s = np.sqrt(w)
    oracle = np.linalg.lstsq(X * s[:, None], y * s, rcond=None)[0]
    fit = weighted_mle(ScoreModel.linear_gaussian(3), LabeledData(X, y), w)
    np.testing.assert_allclose(fit.alpha_hat, oracle, atol=1e-10)


@pytest.mark.parametrize("kind", ["linear", "logistic"])
def test_weights_one_and_scale_invariance(kind, rng):
    if kind == "linear":
        model, data = ScoreModel.linear_gaussian(2), LabeledData(rng.normal(size=(40, 2)), rng.normal(size=40))
    else:
        model, data = ScoreModel.logistic(2), logistic_data(rng)
    base = mle(model, data)
    np.testing.assert_allclose(weighted_mle(model, data, np.ones(len(data))).alpha_hat, base.alpha_hat, atol=1e-10)
    w = rng.uniform(0.2, 2.0, len(data))
    a = weighted_mle(model, data, w).alpha_hat
    np.testing.assert_allclose(weighted_mle(model, data, 7.5 * w).alpha_hat, a, atol=1e-10)
    assert base.final_residual <= 1e-8


def test_logistic_newton_residual(rng):
    data = logistic_data(rng, n=300, d=3)
    model = ScoreModel.logistic(3)
    w = rng.uniform(0.5, 2, 300)
    fit = weighted_mle(model, data, w)
    assert np.max(np.abs(estimating_residual(model, data, fit.alpha_hat, w))) <= 1e-8
    assert fit.iterations < 20


def test_separable_logistic_diverges():
    data = LabeledData([[1.0], [-1.0]], [1.0, 0.0])
    with pytest.raises(Divergence):
        mle(ScoreModel.logistic(1), data)


def test_separation_check(rng):
    X = rng.normal(size=(30, 2))
    Z = np.hstack([np.ones((30, 1)), X])
    assert is_separable(Z, (X[:, 0] > 0).astype(float))
    data = logistic_data(rng)
    assert not is_separable(np.hstack([np.ones((len(data), 1)), data.x]), data.y)


def test_singular_normal_equations():
    data = LabeledData([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]], [1.0, 2.0, 3.0])
    with pytest.raises(SingularSystem):
        mle(ScoreModel.linear_gaussian(2), data)


@pytest.mark.parametrize("model_kind", ["linear", "logistic"])
def test_dress_reduces_to_mle_when_unlabeled_equals_labeled(model_kind, rng):
    if model_kind == "linear":
        model, data = ScoreModel.linear_gaussian(2), LabeledData(rng.normal(size=(60, 2)), rng.normal(size=60))
    else:
        model, data = ScoreModel.logistic(2), logistic_data(rng)
    fit = dress(model, data, data.x.copy(), ParametricRatio(dr.PolyBasis(2)))
    assert np.all(fit.theta_hat == 0)
    assert np.all(fit.weights_used == 1)
    np.testing.assert_allclose(fit.alpha_hat, mle(model, data).alpha_hat, atol=1e-12)


@pytest.mark.parametrize("kind", [dr.NAIVE, dr.QIN])
def test_dress_pair_solves_both_equations(kind, rng):
    X = rng.normal(size=(200, 2))
    data = LabeledData(X, X.sum(1) + 0.3 * (X**2).sum(1) + 0.2 * rng.normal(size=200))
    U = rng.normal(size=(1000, 2))
    model = ScoreModel.linear_gaussian(2)
    ratio = ParametricRatio(dr.PolyBasis(1), dr.MomentFunction(kind))
    fit = dress(model, data, U, ratio)
    wmodel = dr.RatioModel(ratio.basis, fit.theta_hat)
    assert np.max(np.abs(dr.moment_residual(data.x, U, wmodel, ratio.moment))) <= 1e-8
    assert np.max(np.abs(estimating_residual(model, data, fit.alpha_hat, wmodel(data.x)))) <= 1e-8


def test_dress_permutation_invariance(rng):
    X = rng.normal(size=(100, 2))
    data = LabeledData(X, X.sum(1) + 0.5 * X[:, 0] ** 2 + 0.1 * rng.normal(size=100))
    U = rng.normal(size=(400, 2))
    model = ScoreModel.linear_gaussian(2)
    base = dress(model, data, U)
    p, q = rng.permutation(100), rng.permutation(400)
    moved = dress(model, LabeledData(X[p], data.y[p]), U[q])
    np.testing.assert_allclose(moved.alpha_hat, base.alpha_hat, atol=1e-10)
    np.testing.assert_allclose(moved.theta_hat, base.theta_hat, atol=1e-10)


def test_dress_kernel_weights_are_normalised(rng):
    data = logistic_data(rng, n=150)
    fit = dress(ScoreModel.logistic(2), data, rng.normal(size=(300, 2)), KernelRatio(ridge=1e-2))
    assert fit.weights_used.mean() == pytest.approx(1.0, abs=1e-12)
    assert np.all(fit.weights_used > 0)
    assert fit.final_residual <= 1e-8


def test_dress_error_is_tagged_with_stage():
    data = LabeledData([[0.0], [0.0]], [1.0, 2.0])
    with pytest.raises(SingularSystem) as info:
        dress(LIN1, data, [[0.0]], ParametricRatio(dr.PolyBasis(1)))
    assert info.value.stage == "ratio"
