import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dress.errors import ContractViolation
from dress.model import ScoreModel, log_likelihood, mean_score_jacobian, score, score_jacobian, scores

finite = st.floats(min_value=-3, max_value=3, allow_nan=False)


def fd_gradient(fun, a, h=1e-6):
    g = np.zeros_like(a)
    for k in range(len(a)):
        e = np.zeros_like(a)
        e[k] = h
        g[k] = (fun(a + e) - fun(a - e)) / (2 * h)
    return g


def fd_jacobian(fun, a, h=1e-6):
    return np.column_stack([(fun(a + h * e) - fun(a - h * e)) / (2 * h) for e in np.eye(len(a))])


def test_linear_score_examples():
    m = ScoreModel.linear_gaussian(2)
    np.testing.assert_array_equal(score(m, [1, 0], 2, [0, 0]), [2, 0])
    np.testing.assert_array_equal(score(m, [1, 0], 2, [2, 0]), [0, 0])
    np.testing.assert_array_equal(score_jacobian(m, [1, 0], 2, [0.3, 5]), [[-1, 0], [0, 0]])


def test_logistic_score_examples():
    m = ScoreModel.logistic(1)
    np.testing.assert_allclose(score(m, [1], 1, [0, 0]), [0.5, 0.5])
    np.testing.assert_allclose(score_jacobian(m, [0], 1, [0, 0]), [[-0.25, 0], [0, 0]])


def test_param_dims():
    assert ScoreModel.linear_gaussian(3).param_dim == 3
    assert ScoreModel.logistic(3).param_dim == 4
    with pytest.raises(ContractViolation):
        ScoreModel("poisson", 2)


@pytest.mark.parametrize("model", [ScoreModel.linear_gaussian(2), ScoreModel.logistic(2)])
def test_dimension_mismatch(model):
    with pytest.raises(ContractViolation):
        score(model, [1, 2, 3], 1, np.zeros(model.param_dim))
    with pytest.raises(ContractViolation):
        score(model, [1, 2], 1, np.zeros(model.param_dim + 1))


@settings(max_examples=60, deadline=None)
@given(x=arrays(float, 3, elements=finite), alpha=arrays(float, 4, elements=finite), y=st.sampled_from([0, 1]))
def test_logistic_fd_and_structure(x, alpha, y):
    m = ScoreModel.logistic(3)
    u = score(m, x, y, alpha)
    g = fd_gradient(lambda a: log_likelihood(m, x, y, a), alpha)
    np.testing.assert_allclose(u, g, rtol=1e-5, atol=1e-7)
    J = score_jacobian(m, x, y, alpha)
    np.testing.assert_allclose(J, fd_jacobian(lambda a: score(m, x, y, a), alpha), rtol=1e-5, atol=1e-7)
    assert np.max(np.abs(J - J.T)) <= 1e-12
    assert np.linalg.eigvalsh(J).max() <= 1e-12
    # exact up to rounding of (1 - p) x + p x
    np.testing.assert_allclose(score(m, x, 1, alpha) - score(m, x, 0, alpha), np.r_[1.0, x], rtol=1e-15, atol=1e-15)


@settings(max_examples=60, deadline=None)
@given(x=arrays(float, 2, elements=finite), alpha=arrays(float, 2, elements=finite), y=finite)
def test_linear_fd_and_structure(x, alpha, y):
    m = ScoreModel.linear_gaussian(2, noise_scale=1.0)
    np.testing.assert_allclose(
        score(m, x, y, alpha), fd_gradient(lambda a: log_likelihood(m, x, y, a), alpha), rtol=1e-5, atol=1e-6
    )
    J = score_jacobian(m, x, y, alpha)
    np.testing.assert_allclose(J, fd_jacobian(lambda a: score(m, x, y, a), alpha), rtol=1e-5, atol=1e-6)
    assert np.linalg.eigvalsh(J).max() <= 1e-12


def test_noise_scale_only_rescales_likelihood_gradient(rng):
    m = ScoreModel.linear_gaussian(2, noise_scale=0.5)
    x, a = rng.normal(size=2), rng.normal(size=2)
    g = fd_gradient(lambda b: log_likelihood(m, x, 0.7, b), a)
    np.testing.assert_allclose(score(m, x, 0.7, a) / 0.25, g, rtol=1e-5)


def test_batched_agrees_with_single(rng):
    m = ScoreModel.logistic(2)
    X, y, a = rng.normal(size=(7, 2)), rng.integers(0, 2, 7), rng.normal(size=3)
    U = scores(m, X, y, a)
    for k in range(7):
        np.testing.assert_allclose(U[k], score(m, X[k], y[k], a))
    H = np.mean([score_jacobian(m, X[k], y[k], a) for k in range(7)], axis=0)
    np.testing.assert_allclose(mean_score_jacobian(m, X, a), H)
