"""Difference-in-means, regression-augmented, and inverse odds weighting
estimators, plus cohort-bootstrap confidence intervals."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .balance import kish_ess
from .errors import (
    BootstrapDegenerateError,
    DegenerateWeightsError,
    DomainError,
    EmptyArmError,
    PositivityError,
    ProfmatchError,
)
from .glm import fit_binary_glm, fit_ols, predict
from .numerics import RngStream

Z_CRIT = 1.96
BOOTSTRAP_STREAM_BASE = 1_000_000

CSV_FIELDS = ["method", "estimate", "se", "ci_low", "ci_high", "ess", "n_boot_used", "n_boot_failed"]


@dataclass
class EstimateReport:
    estimate: float
    method: str
    ess: float
    se: float | None = None
    ci_low: float | None = None
    ci_high: float | None = None
    n_bootstrap_used: int = 0
    n_bootstrap_failed: int = 0

    def with_bootstrap(self, se: float, used: int, failed: int) -> "EstimateReport":
        return EstimateReport(self.estimate, self.method, self.ess, se,
                              self.estimate - Z_CRIT * se, self.estimate + Z_CRIT * se, used, failed)

    def csv_row(self, fmt: Callable[[float], str] = lambda v: f"{v:.6g}") -> list[str]:
        def f(v):
            return "" if v is None else fmt(float(v))

        return [self.method, f(self.estimate), f(self.se), f(self.ci_low), f(self.ci_high), f(self.ess),
                str(self.n_bootstrap_used), str(self.n_bootstrap_failed)]


@dataclass
class WeightVector:
    weights: np.ndarray  # over trial units, in trial-row order
    selection_prob: np.ndarray
    treatment_prob: float


def _arm(y, label):
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        raise EmptyArmError(f"{label} arm is empty")
    return y


def estimate_pm(y_treated, y_control) -> EstimateReport:
    """Difference in matched means; ESS is the matched count."""
    yt, yc = _arm(y_treated, "treated"), _arm(y_control, "control")
    return EstimateReport(float(yt.mean() - yc.mean()), "pm", float(yt.size + yc.size))


def _ols_arm(X, y, label):
    try:
        return fit_ols(X, y)
    except ProfmatchError as exc:
        exc.args = (f"{label} arm: {exc.args[0] if exc.args else exc}",)
        raise


def estimate_apm(X_treated, y_treated, X_control, y_control) -> EstimateReport:
    """Per-arm OLS predicted over the union of both matched samples."""
    yt, yc = _arm(y_treated, "treated"), _arm(y_control, "control")
    Xt = np.asarray(X_treated, dtype=float).reshape(yt.size, -1)
    Xc = np.asarray(X_control, dtype=float).reshape(yc.size, -1)
    g1 = _ols_arm(Xt, yt, "treated")
    g0 = _ols_arm(Xc, yc, "control")
    U = np.vstack([Xt, Xc])
    est = float(predict(g1, U).mean() - predict(g0, U).mean())
    return EstimateReport(est, "apm", float(yt.size + yc.size))


def fit_iow_weights(ps_design, selected, treated, link: str = "probit") -> WeightVector:
    """Inverse odds of selection over the estimated treatment probability.

    ``ps_design`` is the cohort-wide selection design (no intercept added),
    ``selected`` the 0/1 trial indicator, and ``treated`` the 0/1 arm for the
    trial rows only.
    """
    X = np.asarray(ps_design, dtype=float)
    s = np.asarray(selected, dtype=float)
    z = np.asarray(treated, dtype=float)
    trial = s == 1
    if not trial.any() or trial.all():
        raise DomainError("cohort needs both trial and non-trial rows")
    if z.size != int(trial.sum()):
        raise DomainError("treatment vector must cover exactly the trial rows")
    sel_fit = fit_binary_glm(X, s, link)
    p = predict(sel_fit, X[trial])
    if np.any(p <= 0.0):
        raise PositivityError("estimated selection probability is 0 for a trial unit")
    trt_fit = fit_binary_glm(np.ones((z.size, 1)), z, "logit")
    e1 = float(predict(trt_fit, np.ones((1, 1)))[0])
    e = np.where(z == 1, e1, 1.0 - e1)
    w = ((1.0 - p) / p) / e
    return WeightVector(w, p, e1)


def _hajek(y, w, mask, label):
    tot = w[mask].sum()
    if not tot > 0:
        raise DegenerateWeightsError(f"{label} arm has zero total weight")
    return float((w[mask] * y[mask]).sum() / tot)


def estimate_iow(y, treated, weights) -> EstimateReport:
    """Weighted difference in arm means, each arm normalized by its weight total."""
    y = np.asarray(y, dtype=float)
    z = np.asarray(treated, dtype=float)
    w = np.asarray(weights, dtype=float)
    mu1 = _hajek(y, w, z == 1, "treated")
    mu0 = _hajek(y, w, z == 0, "control")
    return EstimateReport(mu1 - mu0, "iow", kish_ess(w))


def estimate_aiow(X_trial, y, treated, weights, X_target) -> EstimateReport:
    """Outcome-model contrast over the target plus weighted residual corrections."""
    y = np.asarray(y, dtype=float)
    z = np.asarray(treated, dtype=float)
    w = np.asarray(weights, dtype=float)
    X = np.asarray(X_trial, dtype=float).reshape(y.size, -1)
    T = np.asarray(X_target, dtype=float)
    if T.ndim == 1:
        T = T[:, None]
    if T.shape[1] != X.shape[1]:
        raise DomainError("target and trial designs have different columns")
    if T.shape[0] == 0:
        raise DomainError("target population is empty")
    t1, t0 = z == 1, z == 0
    _arm(y[t1], "treated")
    _arm(y[t0], "control")
    g1 = _ols_arm(X[t1], y[t1], "treated")
    g0 = _ols_arm(X[t0], y[t0], "control")
    contrast = float((predict(g1, T) - predict(g0, T)).mean())
    r1 = y - predict(g1, X)
    r0 = y - predict(g0, X)
    est = contrast + _hajek(r1, w, t1, "treated") - _hajek(r0, w, t0, "control")
    return EstimateReport(est, "aiow", kish_ess(w))


def bootstrap_stream(master_seed: int, replicate: int, b: int) -> RngStream:
    if not 0 <= b < 1000:
        raise DomainError("bootstrap index must lie in [0, 1000)")
    return RngStream(master_seed, BOOTSTRAP_STREAM_BASE + replicate * 1000 + b)


def bootstrap_ci(
    estimator: Callable[[np.ndarray], float],
    n_cohort: int,
    point: EstimateReport,
    B: int = 200,
    master_seed: int = 0,
    replicate: int = 0,
) -> EstimateReport:
    """Resample cohort rows with replacement and rerun ``estimator``.

    ``estimator`` receives the resampled row indices and returns one estimate;
    it must redo every data-dependent step (profile, models, matching).
    Replicates raising a package error are dropped and counted.
    """
    if B < 2:
        raise DomainError("bootstrap needs B >= 2")
    values, failed = [], 0
    for b in range(B):
        idx = np.sort(bootstrap_stream(master_seed, replicate, b).integers(n_cohort, n_cohort))
        try:
            v = float(estimator(idx))
        except ProfmatchError:
            failed += 1
            continue
        if not np.isfinite(v):
            failed += 1
            continue
        values.append(v)
    if failed * 2 > B or len(values) < 2:
        raise BootstrapDegenerateError(f"{failed} of {B} bootstrap replicates failed")
    se = float(np.std(values, ddof=1))
    return point.with_bootstrap(se, len(values), failed)


def bootstrap_se_from(values) -> float:
    """n-1 standard deviation of bootstrap replicate estimates."""
    return float(np.std(np.asarray(values, dtype=float), ddof=1))
