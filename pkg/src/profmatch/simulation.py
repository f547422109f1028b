"""Monte Carlo study of profile matching and inverse odds weighting.

A trial is nested in a cohort of ``n_cohort`` units. Six covariates drive
selection into the trial; treatment is randomized within it. Each scenario
fixes the selection family and overlap, the outcome model, effect
heterogeneity, the balance/propensity specification, and the estimator.
The true average effect is 0 in every scenario.
"""

from __future__ import annotations

import csv
import io
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .balance import FeatureSpec, eval_features
from .errors import DomainError, ProfmatchError, ScenarioDegenerateError
from .estimators import (
    bootstrap_ci,
    estimate_aiow,
    estimate_apm,
    estimate_iow,
    estimate_pm,
    fit_iow_weights,
)
from .numerics import DistSpec, RngStream, expit, normal_cdf, sample
from .solver import BalanceProblem, solve_max_balanced_subset

COVARIATES = ["X1", "X2", "X3", "X4", "X5", "X6"]
SIGMA = np.array([[2.0, 1.0, -1.0], [1.0, 1.0, -0.5], [-1.0, -0.5, 1.0]])
SELECTION_COEF = np.array([1.0, 2.0, -2.0, -1.0, -0.5, 1.0])
OVERLAP = {("probit", "high"): 100.0, ("probit", "low"): 30.0, ("logit", "high"): 5.0, ("logit", "low"): 2.0}
METHODS = ("pm", "apm", "iow", "aiow")
ZETA_MEAN, ZETA_SD = 5.0, 0.5
MAX_FAILURE_SHARE = 0.2

_MVN = DistSpec.mvn(np.zeros(3), SIGMA)


@dataclass(frozen=True)
class ScenarioSpec:
    selection_family: str = "probit"
    overlap: str = "high"
    outcome_model: int = 1
    heterogeneity: str = "A"
    het_form: str = "shift"
    ps_spec: int = 1
    method: str = "pm"
    n_cohort: int = 1500
    replicates: int = 200
    bootstrap_B: int = 0
    master_seed: int = 0
    multiplier: float = 0.05
    target: str = "nontrial"  # nontrial | cohort
    scale: str = "target"  # target | cohort
    gap_tolerance: int = 1
    node_limit: int = 1000

    def __post_init__(self):
        if (self.selection_family, self.overlap) not in OVERLAP:
            raise DomainError(f"unknown selection family/overlap {self.selection_family}/{self.overlap}")
        if self.outcome_model not in (1, 2, 3):
            raise DomainError("outcome_model must be 1, 2 or 3")
        if self.heterogeneity not in ("A", "B") or self.het_form not in ("shift", "draft_noise"):
            raise DomainError("heterogeneity must be A/B and het_form shift/draft_noise")
        if self.ps_spec not in (1, 2, 3):
            raise DomainError("ps_spec must be 1, 2 or 3")
        if self.method not in METHODS:
            raise DomainError(f"method must be one of {METHODS}")
        if self.n_cohort < 2 or self.replicates < 1:
            raise DomainError("need n_cohort >= 2 and replicates >= 1")
        if self.bootstrap_B == 1 or self.bootstrap_B < 0:
            raise DomainError("bootstrap_B must be 0 (off) or >= 2")
        if self.target not in ("nontrial", "cohort") or self.scale not in ("target", "cohort"):
            raise DomainError("target must be nontrial/cohort and scale target/cohort")

    @property
    def overlap_parameter(self) -> float:
        return OVERLAP[(self.selection_family, self.overlap)]

    @property
    def scenario_id(self) -> str:
        return (f"{self.selection_family}-{self.overlap}-om{self.outcome_model}-{self.heterogeneity}"
                f"{'' if self.het_form == 'shift' else '-draft'}-ps{self.ps_spec}-{self.method}")


@dataclass
class CohortDraw:
    X: np.ndarray  # n x 6
    S: np.ndarray  # 0/1
    Z: np.ndarray  # 0/1 on trial rows, -1 elsewhere
    Y0: np.ndarray
    Y1: np.ndarray

    @property
    def Y(self) -> np.ndarray:
        return np.where(self.Z == 1, self.Y1, self.Y0)

    def take(self, idx: np.ndarray) -> "CohortDraw":
        return CohortDraw(self.X[idx], self.S[idx], self.Z[idx], self.Y0[idx], self.Y1[idx])

    def columns(self) -> dict:
        return {c: self.X[:, k] for k, c in enumerate(COVARIATES)}


def selection_probability(X: np.ndarray, family: str, parameter: float) -> np.ndarray:
    L = X @ SELECTION_COEF
    if family == "probit":
        return normal_cdf(L / np.sqrt(parameter))
    return expit(L / parameter)


def outcome_mean(X: np.ndarray, model: int) -> np.ndarray:
    X1, X2, X3, X4, X5, X6 = X.T
    if model == 1:
        return X1 + X2 + X3 - X4 + X5 + X6
    if model == 2:
        return X1 + X2 + 0.2 * X3 * X4 - np.sqrt(X5)
    return (X1 + X2 + X5) ** 2


def generate_cohort(spec: ScenarioSpec, replicate_index: int) -> CohortDraw:
    """Draw one cohort on the replicate's own stream.

    The draw order is fixed and every variate is drawn whatever the scenario,
    so scenarios that differ only in outcome model, heterogeneity, or method
    share covariates, selection, and treatment for a given replicate.
    """
    n = spec.n_cohort
    rs = RngStream(spec.master_seed, replicate_index)
    X123 = sample(rs, _MVN, n)
    X4 = sample(rs, DistSpec.uniform(-3.0, 3.0), n)
    X5 = sample(rs, DistSpec.chi_square_1(), n)
    X6 = sample(rs, DistSpec.bernoulli(0.5), n)
    X = np.column_stack([X123, X4, X5, X6])
    u_sel = rs.uniform(n)
    u_trt = rs.uniform(n)
    eta0 = rs.standard_normal(n)
    eta1 = rs.standard_normal(n)
    zeta = sample(rs, DistSpec.normal(ZETA_MEAN, ZETA_SD), n)

    p = selection_probability(X, spec.selection_family, spec.overlap_parameter)
    S = (u_sel < p).astype(int)
    Z = np.where(S == 1, (u_trt < 0.5).astype(int), -1)
    mu = outcome_mean(X, spec.outcome_model)
    Y0 = mu + eta0
    Y1 = mu + eta1
    if spec.heterogeneity == "B":
        if spec.het_form == "shift":
            Y1 = Y1 + 10.0 * (X6 - 0.5)
        else:
            Y1 = Y1 + np.where(X6 == 1, -1.0, 1.0) * zeta
    return CohortDraw(X, S, Z, Y0, Y1)


def build_ps_features(ps_spec: int) -> list[FeatureSpec]:
    if ps_spec == 1:
        return [FeatureSpec.raw(c) for c in COVARIATES]
    if ps_spec == 2:
        return [FeatureSpec.parse(t) for t in ("X1^2", "X2^2", "X3", "X4^2", "X5^2", "X6")]
    if ps_spec == 3:
        return [FeatureSpec.parse(t) for t in ("X1*X3", "X2^2", "X4", "X5", "X6")]
    raise DomainError("ps_spec must be 1, 2 or 3")


@dataclass
class ReplicateOutcome:
    estimate: float
    ess: float
    tasmd_before: np.ndarray  # 2 x 6, rows: treated, control
    tasmd_after: np.ndarray
    balance_excess: float  # max over arms/features of TASMD - multiplier; PM only
    se: float | None
    ci_low: float | None
    ci_high: float | None
    boot_failed: int
    nonoptimal: int


def _target_and_scale(spec: ScenarioSpec, draw: CohortDraw, B: np.ndarray):
    tgt_rows = draw.S == 0 if spec.target == "nontrial" else np.ones(len(draw.S), bool)
    if not tgt_rows.any():
        raise DomainError("target population is empty")
    scale_rows = tgt_rows if spec.scale == "target" else np.ones(len(draw.S), bool)
    if scale_rows.sum() < 2:
        raise DomainError("scale population needs two or more rows")
    return tgt_rows, B[tgt_rows].mean(axis=0), B[scale_rows].std(axis=0, ddof=1)


def _estimate(spec: ScenarioSpec, draw: CohortDraw, with_diagnostics: bool = True):
    """Point estimate on one cohort draw, plus balance diagnostics."""
    trial = draw.S == 1
    z = draw.Z[trial]
    y = draw.Y[trial]
    Xt = draw.X[trial]
    arms = (z == 1, z == 0)
    features = build_ps_features(spec.ps_spec)
    cols = draw.columns()
    Bf = eval_features(cols, features)
    tgt_rows, targets, sds = _target_and_scale(spec, draw, Bf)
    nonoptimal = 0
    excess = float("nan")

    if spec.method in ("pm", "apm"):
        tol = spec.multiplier * sds
        Btrial = Bf[trial]
        chosen = []
        excess = -np.inf
        for arm in arms:
            problem = BalanceProblem(Btrial[arm] - targets, tol, time_limit=1e9,
                                     gap_tolerance=spec.gap_tolerance, node_limit=spec.node_limit)
            res = solve_max_balanced_subset(problem)
            nonoptimal += res.status not in ("optimal", "empty_only")
            sel = res.selected == 1
            if with_diagnostics and sel.any():
                dev = np.abs(Btrial[arm][sel].mean(axis=0) - targets) / sds
                excess = max(excess, float((dev - spec.multiplier).max()))
            chosen.append(np.flatnonzero(arm)[sel])
        it, ic = chosen
        if spec.method == "pm":
            rep = estimate_pm(y[it], y[ic])
        else:
            rep = estimate_apm(Xt[it], y[it], Xt[ic], y[ic])
        w = np.zeros(trial.sum())
        w[it] = 1.0
        w[ic] = 1.0
    else:
        wv = fit_iow_weights(Bf, draw.S, z, "probit")
        w = wv.weights
        if spec.method == "iow":
            rep = estimate_iow(y, z, w)
        else:
            rep = estimate_aiow(Xt, y, z, w, draw.X[tgt_rows])

    if not with_diagnostics:
        return rep, None, None, excess, nonoptimal
    # TASMD of the raw covariates, always on the raw-covariate scale
    _, raw_tgt, raw_sd = _target_and_scale(spec, draw, draw.X)
    before = np.vstack([np.abs(Xt[a].mean(axis=0) - raw_tgt) / raw_sd for a in arms])
    after = np.vstack([
        np.abs((w[a][:, None] * Xt[a]).sum(axis=0) / w[a].sum() - raw_tgt) / raw_sd
        if w[a].sum() > 0 else np.full(6, np.nan)
        for a in arms
    ])
    return rep, before, after, excess, nonoptimal


def run_replicate(spec: ScenarioSpec, r: int) -> ReplicateOutcome | str:
    """One replicate; returns an error code string if it fails."""
    try:
        draw = generate_cohort(spec, r)
        rep, before, after, excess, nonopt = _estimate(spec, draw)
    except ProfmatchError as exc:
        return exc.code
    se = lo = hi = None
    failed = 0
    if spec.bootstrap_B:
        def boot(idx):
            return _estimate(spec, draw.take(idx), with_diagnostics=False)[0].estimate

        try:
            out = bootstrap_ci(boot, spec.n_cohort, rep, spec.bootstrap_B, spec.master_seed, r)
        except ProfmatchError as exc:
            return exc.code
        se, lo, hi, failed = out.se, out.ci_low, out.ci_high, out.n_bootstrap_failed
    return ReplicateOutcome(rep.estimate, rep.ess, before, after, excess, se, lo, hi, failed, nonopt)


def _run_one(args):
    spec, r = args
    return run_replicate(spec, r)


def resolve_workers(workers: int | None) -> int:
    env = os.environ.get("PROFMATCH_WORKERS")
    if env:
        try:
            workers = int(env)
        except ValueError:
            raise DomainError(f"PROFMATCH_WORKERS must be an integer, got {env!r}") from None
    if workers is None:
        workers = os.cpu_count() or 1
    return max(1, int(workers))


def run_replicates(spec: ScenarioSpec, workers: int | None = 1) -> list:
    """All replicates of ``spec`` in replicate order, whatever the schedule."""
    jobs = [(spec, r) for r in range(spec.replicates)]
    workers = resolve_workers(workers)
    if workers == 1 or len(jobs) == 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(_run_one, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


def metrics_fields() -> list[str]:
    base = ["scenario", "replicates_used", "replicates_failed", "mab", "rmse", "mean_bias", "variance",
            "coverage", "mean_ci_length", "mean_ess", "max_balance_excess", "nonoptimal_solves",
            "bootstrap_failed"]
    tas = [f"tasmd_{when}_{c}_{arm}" for when in ("before", "after") for c in COVARIATES
           for arm in ("treated", "control")]
    return base + tas


def aggregate(spec: ScenarioSpec, outcomes: list) -> dict:
    """Metrics over the successful replicates; truth is 0."""
    ok = [o for o in outcomes if isinstance(o, ReplicateOutcome)]
    failed = len(outcomes) - len(ok)
    if not ok or failed > MAX_FAILURE_SHARE * len(outcomes):
        raise ScenarioDegenerateError(f"{spec.scenario_id}: {failed} of {len(outcomes)} replicates failed")
    est = np.array([o.estimate for o in ok])
    R = est.size
    row = {
        "scenario": spec.scenario_id,
        "replicates_used": R,
        "replicates_failed": failed,
        "mab": float(np.abs(est).mean()),
        "rmse": float(np.sqrt(np.mean(est * est))),
        "mean_bias": float(est.mean()),
        "variance": float(est.var(ddof=1)) if R > 1 else float("nan"),
        "coverage": float("nan"),
        "mean_ci_length": float("nan"),
        "mean_ess": float(np.mean([o.ess for o in ok])),
        "max_balance_excess": float(np.nanmax([o.balance_excess for o in ok]))
        if spec.method in ("pm", "apm") else float("nan"),
        "nonoptimal_solves": int(sum(o.nonoptimal for o in ok)),
        "bootstrap_failed": int(sum(o.boot_failed for o in ok)),
    }
    if spec.bootstrap_B:
        lo = np.array([o.ci_low for o in ok])
        hi = np.array([o.ci_high for o in ok])
        row["coverage"] = float(np.mean((lo <= 0.0) & (0.0 <= hi)))
        row["mean_ci_length"] = float(np.mean(hi - lo))
    before = np.nanmean(np.stack([o.tasmd_before for o in ok]), axis=0)
    after = np.nanmean(np.stack([o.tasmd_after for o in ok]), axis=0)
    for when, arr in (("before", before), ("after", after)):
        for k, c in enumerate(COVARIATES):
            for a, arm in enumerate(("treated", "control")):
                row[f"tasmd_{when}_{c}_{arm}"] = float(arr[a, k])
    return row


def run_scenario(spec: ScenarioSpec, workers: int | None = 1) -> dict:
    return aggregate(spec, run_replicates(spec, workers))


def format_value(v, precision: str = "6g") -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if precision == "full":
        return repr(float(v))
    return f"{float(v):.6g}"


def rows_to_csv(rows: list[dict], precision: str = "6g") -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = metrics_fields()
    w.writerow(header)
    for row in rows:
        w.writerow([format_value(row[h], precision) for h in header])
    return buf.getvalue()


def run_grid(specs: list[ScenarioSpec], workers: int | None = 1, precision: str = "6g") -> str:
    """Run every scenario and return the metrics CSV text."""
    if not specs:
        raise DomainError("scenario grid is empty")
    rows = []
    for spec in specs:
        try:
            rows.append(run_scenario(spec, workers))
        except ProfmatchError as exc:
            exc.args = (f"scenario {spec.scenario_id}: {exc.args[0] if exc.args else exc}",)
            raise
    return rows_to_csv(rows, precision)


def study_grid(**overrides) -> list[ScenarioSpec]:
    """2 overlaps x 3 outcome models x 2 heterogeneity settings x 3 specs x 4 methods."""
    return [
        ScenarioSpec(overlap=ov, outcome_model=om, heterogeneity=het, ps_spec=ps, method=m, **overrides)
        for ov in ("high", "low")
        for om in (1, 2, 3)
        for het in ("A", "B")
        for ps in (1, 2, 3)
        for m in METHODS
    ]
