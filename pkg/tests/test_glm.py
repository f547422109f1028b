import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from profmatch.errors import (
    DegenerateResponseError,
    RankError,
    SeparationError,
    ShapeError,
    UnderdeterminedError,
)
from profmatch.glm import binary_score, fit_binary_glm, fit_ols, predict


def test_intercept_only_probit_closed_form():
    y = np.array([1] * 7 + [0] * 3)
    fit = fit_binary_glm(np.ones((10, 1)), y, "probit")
    # Phi^{-1}(0.7) from a 40-digit inverse-erf evaluation
    assert abs(fit.coefficients[0] - 0.5244005127080408) < 1e-6


def test_intercept_only_logit_symmetric():
    y = np.array([1] * 5 + [0] * 5)
    fit = fit_binary_glm(np.ones((10, 1)), y, "logit")
    assert abs(fit.coefficients[0]) < 1e-10


def test_separation():
    x = np.array([-3.0, -2.0, -1.0, 1.0, 2.0, 3.0])[:, None]
    y = (x[:, 0] > 0).astype(int)
    with pytest.raises(SeparationError):
        fit_binary_glm(x, y, "probit")


def test_degenerate_and_shape_errors():
    X = np.random.default_rng(0).normal(size=(10, 2))
    with pytest.raises(DegenerateResponseError):
        fit_binary_glm(X, np.ones(10), "logit")
    with pytest.raises(RankError):
        fit_binary_glm(np.column_stack([X[:, 0], X[:, 0]]), np.r_[np.ones(5), np.zeros(5)], "logit")
    with pytest.raises(UnderdeterminedError):
        fit_binary_glm(X[:2], np.array([0, 1]), "logit")
    with pytest.raises(ShapeError):
        fit_binary_glm(X, np.ones(9), "logit")


@pytest.mark.parametrize("link", ["probit", "logit"])
def test_score_small_at_mle(link):
    rng = np.random.default_rng(1)
    X = np.column_stack([np.ones(2000), rng.normal(size=(2000, 3))])
    beta = np.array([0.2, 0.5, -0.7, 0.3])
    eta = X @ beta
    p = predict(fit_binary_glm(X, (rng.random(2000) < 0.5).astype(int), link), X)
    assert p.shape == (2000,)
    y = (rng.random(2000) < (1 / (1 + np.exp(-eta)) if link == "logit" else __import__("scipy").special.ndtr(eta))).astype(int)
    fit = fit_binary_glm(X, y, link)
    assert fit.converged
    assert np.max(np.abs(binary_score(X, y, fit.coefficients, link))) < 1e-6


def test_ols_noiseless():
    x = np.arange(5.0)
    fit = fit_ols(x, 3 + 2 * x)
    assert np.allclose(fit.coefficients, [3, 2])
    assert abs(predict(fit, np.array([[1.0]]))[0] - 5.0) < 1e-12


def test_ols_intercept_only_is_mean():
    y = np.random.default_rng(2).normal(size=30)
    fit = fit_ols(np.ones((30, 1)), y, add_intercept=False)
    assert abs(fit.coefficients[0] - y.mean()) < 1e-12


def test_ols_errors():
    x = np.random.default_rng(3).normal(size=(10, 1))
    with pytest.raises(RankError):
        fit_ols(np.column_stack([x, x]), x[:, 0])
    with pytest.raises(UnderdeterminedError):
        fit_ols(np.ones((2, 3)), np.ones(2))


def test_predict_links_and_shape():
    from profmatch.glm import GlmFit

    assert predict(GlmFit(np.array([0.0]), "probit", True, 1), np.array([[1.0]]))[0] == 0.5
    f = GlmFit(np.array([1.0]), "logit", True, 1)
    p = predict(f, np.array([[10.0], [40.0], [300.0]]))
    assert np.all((p > 0) & (p <= 1)) and np.all(np.diff(p) >= 0)
    with pytest.raises(ShapeError):
        predict(f, np.ones((2, 2)))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_ols_matches_normal_equations(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(40, 3))
    y = rng.normal(size=40)
    fit = fit_ols(X, y)
    D = np.column_stack([np.ones(40), X])
    ref = np.linalg.solve(D.T @ D, D.T @ y)
    assert np.allclose(fit.coefficients, ref, atol=1e-8)
    r = y - D @ fit.coefficients
    assert np.max(np.abs(D.T @ r)) < 1e-8 * max(1.0, np.abs(D).max() * np.abs(y).max() * 40)
