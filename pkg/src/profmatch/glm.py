"""Probit/logit maximum likelihood and least squares.

No intercept is ever added to binary-response designs; pass a column of ones
if you want one. ``fit_ols`` prepends its own intercept unless told not to.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import (
    DegenerateResponseError,
    RankError,
    SeparationError,
    ShapeError,
    UnderdeterminedError,
)

MAX_ITER = 100
SEPARATION_LIMIT = 1e3


@dataclass
class GlmFit:
    coefficients: np.ndarray
    link: str
    converged: bool
    iterations: int
    log_likelihood: float | None = None
    intercept_added: bool = False


def _check_rank(X: np.ndarray) -> None:
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise RankError(f"design matrix is rank deficient ({X.shape[1]} columns)")


def _loglik_parts(eta, y, link):
    """Log-likelihood, score weights and (negative) Hessian weights."""
    if link == "logit":
        mu = special.expit(eta)
        ll = np.sum(y * special.log_expit(eta) + (1 - y) * special.log_expit(-eta))
        return ll, y - mu, mu * (1.0 - mu)
    # probit: work with the inverse Mills ratio on each side for stability
    q = 2.0 * y - 1.0
    qeta = q * eta
    log_cdf = special.log_ndtr(qeta)
    log_pdf = -0.5 * eta * eta - 0.5 * np.log(2.0 * np.pi)
    lam = np.exp(log_pdf - log_cdf)
    ll = np.sum(log_cdf)
    return ll, q * lam, lam * (lam + qeta)


def binary_score(X, y, beta, link) -> np.ndarray:
    _, g, _ = _loglik_parts(X @ beta, np.asarray(y, dtype=float), link)
    return X.T @ g


def fit_binary_glm(design, response, link: str = "probit") -> GlmFit:
    """Maximum likelihood by Newton-Raphson with step halving, starting at 0."""
    if link not in ("probit", "logit"):
        raise ValueError(f"unsupported link {link!r}")
    X = np.asarray(design, dtype=float)
    y = np.asarray(response, dtype=float)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ShapeError("design must be n x p and response length n")
    n, p = X.shape
    if n <= p:
        raise UnderdeterminedError(f"need n > p, got n={n}, p={p}")
    if np.any((y != 0) & (y != 1)):
        raise ShapeError("response must be 0/1")
    if y.min() == y.max():
        raise DegenerateResponseError("response contains a single class")
    _check_rank(X)

    beta = np.zeros(p)
    ll, g, h = _loglik_parts(X @ beta, y, link)
    converged = False
    it = 0
    for it in range(1, MAX_ITER + 1):
        score = X.T @ g
        info = X.T @ (X * h[:, None])
        try:
            step = np.linalg.solve(info, score)
        except np.linalg.LinAlgError:
            raise SeparationError("information matrix became singular") from None
        t = 1.0
        while True:
            cand = beta + t * step
            ll_c, g_c, h_c = _loglik_parts(X @ cand, y, link)
            if np.isfinite(ll_c) and ll_c >= ll - 1e-12 * abs(ll):
                break
            t *= 0.5
            if t < 1e-10:
                raise SeparationError("line search failed to improve the likelihood")
        rel = abs(ll_c - ll) / max(abs(ll), 1.0)
        dmax = np.max(np.abs(cand - beta))
        beta, ll, g, h = cand, ll_c, g_c, h_c
        if np.max(np.abs(beta)) > SEPARATION_LIMIT:
            raise SeparationError("coefficients diverged; data look separated")
        if dmax < 1e-8 or (rel < 1e-10 and np.max(np.abs(X.T @ g)) < 1e-6):
            converged = True
            break
    if not converged:
        raise SeparationError(f"no convergence after {MAX_ITER} iterations")
    # the likelihood of a separated sample climbs towards 1 without a finite maximiser;
    # Newton stalls once every fitted probability rounds to its observed class
    if ll > -1e-6:
        raise SeparationError("every observation is fitted with probability ~1; data look separated")
    return GlmFit(beta, link, True, it, float(ll))


def fit_ols(design, response, add_intercept: bool = True) -> GlmFit:
    X = np.asarray(design, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(response, dtype=float)
    if y.shape != (X.shape[0],):
        raise ShapeError("response length does not match design rows")
    if add_intercept:
        X = np.column_stack([np.ones(X.shape[0]), X])
    n, p = X.shape
    if n < p:
        raise UnderdeterminedError(f"need n >= p, got n={n}, p={p}")
    Q, R = np.linalg.qr(X)
    diag = np.abs(np.diag(R))
    if diag.size and diag.min() <= 1e-10 * max(1.0, diag.max()):
        raise RankError("design matrix is rank deficient")
    beta = np.linalg.solve(R, Q.T @ y)
    return GlmFit(beta, "identity", True, 1, None, add_intercept)


def predict(fit: GlmFit, design) -> np.ndarray:
    X = np.asarray(design, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if fit.intercept_added:
        X = np.column_stack([np.ones(X.shape[0]), X])
    if X.shape[1] != fit.coefficients.size:
        raise ShapeError(f"design has {X.shape[1]} columns, fit expects {fit.coefficients.size}")
    eta = X @ fit.coefficients
    if fit.link == "identity":
        return eta
    if fit.link == "probit":
        return special.ndtr(eta)
    return special.expit(eta)
