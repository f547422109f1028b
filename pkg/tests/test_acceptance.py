"""Acceptance criteria at full size.

Each test logs one PASS/FAIL line (see the "acceptance criteria" section of
the pytest summary). The bootstrap coverage test is marked ``slow``; skip it
with ``-m "not slow"``.
"""

import functools
import itertools
import os
import subprocess
import sys
from math import comb

import numpy as np
import pytest
from scipy import special, stats

from profmatch.glm import binary_score, fit_binary_glm
from profmatch.matching import min_cost_assignment, profile_match_via_copy
from profmatch.paired import (
    PairedBinary,
    binary_gamma_pvalue,
    mcnemar_test,
    rank_gamma_pvalue,
    rosenbaum_gamma_binary,
    rosenbaum_gamma_rank,
    signed_ranks,
    wilcoxon_signed_rank,
)
from profmatch.simulation import (
    ReplicateOutcome,
    ScenarioSpec,
    aggregate,
    generate_cohort,
    run_replicates,
)
from profmatch.solver import BalanceProblem, brute_force_reference, solve_max_balanced_subset


@functools.lru_cache(maxsize=None)
def outcomes(spec: ScenarioSpec):
    return tuple(run_replicates(spec, workers=None))


def metrics(spec):
    return aggregate(spec, list(outcomes(spec)))


def within(value, target, rel):
    return abs(value - target) <= rel * target


PM_CELLS = [
    ScenarioSpec(overlap=ov, heterogeneity=het, ps_spec=ps)
    for ov in ("high", "low")
    for het in ("A", "B")
    for ps in (1, 2, 3)
]


def test_1_balance_by_construction(record):
    worst, arms, failed = -np.inf, 0, 0
    for spec in PM_CELLS:
        for o in outcomes(spec):
            if not isinstance(o, ReplicateOutcome):
                failed += 1
                continue
            worst = max(worst, o.balance_excess)
            arms += 2
    ok = failed == 0 and worst <= 0.0
    record("1 ", ok, f"balanced features, {len(PM_CELLS)} cells x 200 reps: {arms} matched arms, "
                     f"{failed} failed reps, max TASMD - 0.05 = {worst:.3g}")
    assert ok


@pytest.mark.xfail(strict=True, reason="specs 2 and 3 do not balance every raw covariate by design")
def test_1_raw_covariates_literal(record):
    bad = {}
    for spec in PM_CELLS:
        n = sum(int(np.any(o.tasmd_after > 0.05)) for o in outcomes(spec) if isinstance(o, ReplicateOutcome))
        if n:
            bad[spec.scenario_id] = n
    ok = not bad
    record("1*", ok, "every raw covariate <= 0.05 in every cell; reps over: "
                     + (", ".join(f"{k}={v}" for k, v in bad.items()) or "none"))
    assert ok


def test_2_effective_sample_size(record):
    checks = [
        ("PM1 high", ScenarioSpec(overlap="high"), 412.8, 0.10),
        ("PM1 low", ScenarioSpec(overlap="low"), 194.0, 0.12),
        ("IOW1 high", ScenarioSpec(overlap="high", method="iow"), 400.1, 0.10),
        ("IOW1 low", ScenarioSpec(overlap="low", method="iow"), 147.9, 0.12),
    ]
    parts, ok = [], True
    for name, spec, target, rel in checks:
        ess = metrics(spec)["mean_ess"]
        good = within(ess, target, rel)
        ok &= good
        parts.append(f"{name} {ess:.1f} (ref {target}){'' if good else ' OUT'}")
    record("2 ", ok, "; ".join(parts))
    assert ok


def test_3_accuracy(record):
    m1 = metrics(ScenarioSpec())
    m2 = metrics(ScenarioSpec(outcome_model=3))
    m3 = metrics(ScenarioSpec(outcome_model=3, overlap="low", ps_spec=3, method="apm"))
    checks = [
        ("PM1/OM1/high MAB", m1["mab"], abs(m1["mab"] - 0.09) <= 0.03, "0.09+-0.03"),
        ("variance", m1["variance"], within(m1["variance"], 0.01, 0.5), "0.01+-50%"),
        ("PM1/OM3/high MAB", m2["mab"], abs(m2["mab"] - 0.74) <= 0.20, "0.74+-0.20"),
        ("aPM3/OM3/low MAB", m3["mab"], abs(m3["mab"] - 0.61) <= 0.20, "0.61+-0.20"),
    ]
    ok = all(c[2] for c in checks)
    record("3 ", ok, "; ".join(f"{n} {v:.4f} ({ref}){'' if g else ' OUT'}" for n, v, g, ref in checks))
    assert ok


@pytest.mark.slow
def test_4_coverage_and_length(record):
    pm = aggregate(s := ScenarioSpec(replicates=100, bootstrap_B=200), list(run_replicates(s, None)))
    iw = aggregate(s := ScenarioSpec(replicates=100, bootstrap_B=200, method="iow"), list(run_replicates(s, None)))
    c1 = 0.91 <= pm["coverage"] <= 1.0
    c2 = within(pm["mean_ci_length"], 0.46, 0.25)
    c3 = 0.89 <= iw["coverage"] <= 0.99
    ok = c1 and c2 and c3
    record("4 ", ok, f"PM1 coverage {pm['coverage']:.2f} [0.91,1]; PM1 length {pm['mean_ci_length']:.3f} "
                     f"(0.46+-25%); IOW1 coverage {iw['coverage']:.2f} [0.89,0.99] (IOW1 length "
                     f"{iw['mean_ci_length']:.3f}, bootstrap failures {pm['bootstrap_failed']}/{iw['bootstrap_failed']})")
    assert ok


def test_5_heterogeneity(record):
    parts, ok = [], True
    for form in ("shift", "draft_noise"):
        d = generate_cohort(ScenarioSpec(n_cohort=100_000, heterogeneity="B", het_form=form), 0)
        diff = d.Y1 - d.Y0
        s0, s1 = diff[d.X[:, 5] == 0].mean(), diff[d.X[:, 5] == 1].mean()
        good = abs(abs(s0) - 5) <= 0.1 and abs(abs(s1) - 5) <= 0.1 and abs(diff.mean()) <= 0.05
        ok &= good
        parts.append(f"{form}: X6=0 {s0:+.3f}, X6=1 {s1:+.3f}, marginal {diff.mean():+.4f}")
    record("5 ", ok, "; ".join(parts))
    assert ok


def test_6_solver_exactness(record):
    rng = np.random.default_rng(20240601)
    agree = 0
    for _ in range(500):
        n, k = int(rng.integers(1, 19)), int(rng.integers(1, 4))
        p = BalanceProblem(rng.normal(size=(n, k)), rng.uniform(0.01, 0.5, k))
        agree += solve_max_balanced_subset(p).objective == brute_force_reference(p).objective
    copy_agree = 0
    for _ in range(200):
        n, k = int(rng.integers(1, 13)), int(rng.integers(1, 4))
        p = BalanceProblem(rng.normal(size=(n, k)), rng.uniform(0.01, 0.5, k))
        copy_agree += profile_match_via_copy(p).objective == solve_max_balanced_subset(p).objective
    ok = agree == 500 and copy_agree == 200
    record("6 ", ok, f"direct vs brute force {agree}/500; direct vs copy formulation {copy_agree}/200")
    assert ok


def test_7_assignment_exactness(record):
    rng = np.random.default_rng(7)
    perms = np.array(list(itertools.permutations(range(7))))
    rows = np.arange(7)
    agree = 0
    for _ in range(200):
        C = rng.uniform(0, 10, size=(7, 7))
        costs = C[rows, perms].sum(axis=1)
        got = C[rows, min_cost_assignment(C)].sum()
        agree += abs(got - costs.min()) <= 1e-9
    record("7 ", agree == 200, f"Hungarian equals enumeration minimum on {agree}/200 7x7 matrices")
    assert agree == 200


def _enumerate_p_upper(ranks, t):
    vals = [sum(r for r, s in zip(ranks, signs) if s) for signs in itertools.product((0, 1), repeat=len(ranks))]
    return np.mean(np.array(vals) >= t - 1e-9)


def test_8_test_oracles(record):
    rng = np.random.default_rng(8)
    wil = 0
    for _ in range(1000):
        n = int(rng.integers(1, 11))
        d = rng.integers(1, 6, size=n) * rng.choice([-1, 1], size=n)
        ranks, sign = signed_ranks(d)
        t = ranks[sign > 0].sum()
        wil += abs(wilcoxon_signed_rank(d, "exact").p_upper - _enumerate_p_upper(ranks.tolist(), t)) < 1e-12
    mc = 0
    for D in range(1, 41):
        for n10 in range(D + 1):
            tail = sum(comb(D, k) for k in range(max(n10, D - n10), D + 1)) / 2**D
            mc += abs(mcnemar_test(PairedBinary(3, n10, D - n10, 4)).p_two_sided - min(1.0, 2 * tail)) < 1e-12
    n_mc = sum(D + 1 for D in range(1, 41))
    g1 = 0
    for _ in range(100):
        D = int(rng.integers(1, 50))
        T = int(rng.integers(0, D + 1))
        pairs = PairedBinary(0, T, D - T, 0)
        tail = sum(comb(D, k) for k in range(max(T, D - T), D + 1)) / 2**D
        g1 += abs(binary_gamma_pvalue(pairs, 1.0) - tail) < 1e-12
        d = rng.normal(0.2, 1.0, size=int(rng.integers(2, 30)))
        w = wilcoxon_signed_rank(d, "normal", continuity=False)
        g1 += abs(rank_gamma_pvalue(d, 1.0) - min(w.p_upper, w.p_lower)) < 1e-12
    br = 0
    for i in range(100):
        if i % 2:
            D = int(rng.integers(5, 80))
            pairs = PairedBinary(0, int(rng.integers(D // 2, D + 1)), 0, 0)
            pairs = PairedBinary(0, pairs.n10, D - pairs.n10, 0)
            r = rosenbaum_gamma_binary(pairs)
            pv = functools.partial(binary_gamma_pvalue, pairs)
        else:
            d = rng.normal(rng.uniform(0, 1.5), 1.0, size=int(rng.integers(5, 60)))
            r = rosenbaum_gamma_rank(d)
            pv = functools.partial(rank_gamma_pvalue, d)
        if r.gamma_star is None:
            br += r.p_at_gamma1 > 0.05
        elif r.capped:
            br += pv(100.0) <= 0.05
        else:
            br += pv(r.gamma_star) <= 0.05 < pv(r.gamma_star + 0.005)
    ok = wil == 1000 and mc == n_mc and g1 == 200 and br == 100
    record("8 ", ok, f"exact Wilcoxon {wil}/1000; McNemar {mc}/{n_mc}; gamma=1 reductions {g1}/200; "
                     f"gamma* bracketing {br}/100")
    assert ok


def _standard_errors(X, beta, link):
    eta = X @ beta
    if link == "logit":
        mu = special.expit(eta)
        w = mu * (1 - mu)
    else:
        mu = stats.norm.cdf(eta)
        w = stats.norm.pdf(eta) ** 2 / (mu * (1 - mu))
    return np.sqrt(np.diag(np.linalg.inv(X.T @ (X * w[:, None]))))


def test_9_glm_fidelity(record):
    rng = np.random.default_rng(9)
    truth = np.array([0.3, -0.8, 0.5])
    worst_score, covered, total = 0.0, 0, 0
    for i in range(200):
        link = "probit" if i % 2 == 0 else "logit"
        X = np.column_stack([np.ones(400), rng.normal(size=(400, 2))])
        eta = X @ truth
        p = stats.norm.cdf(eta) if link == "probit" else special.expit(eta)
        y = (rng.uniform(size=400) < p).astype(float)
        fit = fit_binary_glm(X, y, link)
        worst_score = max(worst_score, float(np.max(np.abs(binary_score(X, y, fit.coefficients, link)))))
        se = _standard_errors(X, fit.coefficients, link)
        covered += np.all(np.abs(fit.coefficients - truth) <= 3 * se)
        total += 1
    closed = 0.0
    for n in range(2, 40):
        for k in range(1, n):
            y = np.r_[np.ones(k), np.zeros(n - k)]
            b = fit_binary_glm(np.ones((n, 1)), y, "probit").coefficients[0]
            closed = max(closed, abs(b - stats.norm.ppf(k / n)))
    share = covered / total
    ok = worst_score < 1e-6 and share >= 0.95 and closed <= 1e-6
    record("9 ", ok, f"max score {worst_score:.2e}; recovery within 3 SE {share:.3f}; "
                     f"intercept-only closed form max error {closed:.2e}")
    assert ok


def _cli(args, env_workers=None):
    env = dict(os.environ)
    env.pop("PROFMATCH_WORKERS", None)
    return subprocess.run([sys.executable, "-m", "profmatch.cli", *args], capture_output=True, env=env,
                          check=True)


def test_10_determinism(record, tmp_path):
    outputs = {}
    for w in (1, 8):
        out = tmp_path / f"sim{w}.csv"
        _cli(["simulate", "--method", "pm,iow", "--ps", "1,2", "--overlap", "high,low", "--reps", "16",
              "--bootstrap-B", "4", "--seed", "11", "--workers", str(w), "--precision", "full",
              "--output", str(out)])
        outputs[w] = out.read_bytes()
    d = generate_cohort(ScenarioSpec(n_cohort=400, master_seed=3), 0)
    data = tmp_path / "cohort.csv"
    lines = ["S,Z,Y,X1,X2,X3,X4,X5,X6"]
    for i in range(400):
        z = "" if d.S[i] == 0 else str(d.Z[i])
        lines.append(",".join([str(d.S[i]), z, repr(float(d.Y[i]))] + [repr(float(v)) for v in d.X[i]]))
    data.write_text("\n".join(lines) + "\n")
    match = []
    for k in range(2):
        out, est = tmp_path / f"m{k}.csv", tmp_path / f"e{k}.csv"
        _cli(["match", "--input", str(data), "--treatment", "Z", "--selection", "S",
              "--covariates", "X1,X2,X3,X4,X5,X6", "--outcome", "Y", "--estimate", str(est), "--bootstrap", "5",
              "--seed", "2", "--node-limit", "500", "--output", str(out)])
        match.append(out.read_bytes() + est.read_bytes())
    ok = outputs[1] == outputs[8] and match[0] == match[1]
    record("10", ok, f"simulate 1 vs 8 workers identical={outputs[1] == outputs[8]}; "
                     f"repeated match identical={match[0] == match[1]}")
    assert ok
