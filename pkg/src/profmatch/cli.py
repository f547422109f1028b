"""Command-line interface: ``profmatch <command> [options]``.

Exit status is 0 on success, 1 on user errors, 2 on numerical failures.
Errors print as ``error[<code>]: <message>`` on stderr.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import os
import sys

import numpy as np

from . import __version__
from .balance import FeatureSpec, Profile, eval_features, pooled_sds, profile_from_target, tasmd
from .errors import ConfigError, DataError, ProfmatchError
from .estimators import CSV_FIELDS, bootstrap_ci, estimate_pm
from .io import ColumnRoles, Dataset, load_dataset, read_profile, write_csv, write_matched, write_profile
from .matching import DistanceSpec, MatchRequest, pairwise_cardinality_match, profile_match
from .paired import (
    PairedBinary,
    mcnemar_test,
    rosenbaum_gamma_binary,
    rosenbaum_gamma_rank,
    wilcoxon_signed_rank,
)
from .simulation import METHODS, ScenarioSpec, study_grid, resolve_workers, run_grid


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _fmt(v, precision: str) -> str:
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return repr(float(v)) if precision == "full" else f"{float(v):.6g}"


def _split(text: str | None) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()] if text else []


def _check_output(path: str | None) -> None:
    if not path:
        return
    d = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(d) or not os.access(d, os.W_OK):
        raise ConfigError(f"cannot write output {path!r}: directory missing or not writable")


def _check_input(path: str) -> None:
    if not os.path.isfile(path) or not os.access(path, os.R_OK):
        raise ConfigError(f"cannot read input {path!r}")


# shared profile handling

def _add_profile_options(p):
    p.add_argument("--input", required=True, help="dataset CSV with a header row")
    p.add_argument("--group-column", "--treatment", dest="group_column", required=True,
                   help="column holding the group (treatment) label")
    p.add_argument("--groups", help="comma-separated group labels (default: all labels among study rows)")
    p.add_argument("--covariates", help="comma-separated raw covariate columns")
    p.add_argument("--features", help="comma-separated features such as X1,X2^2,X1*X3 (default: covariates)")
    p.add_argument("--profile", help="profile JSON; overrides target-based profile construction")
    p.add_argument("--selection", help="column marking study (1) versus target (0) rows")
    p.add_argument("--target-value", type=int, default=0, help="selection value of target rows")
    p.add_argument("--multiplier", type=float, default=0.05)
    p.add_argument("--scale", choices=["cohort", "target", "pooled"], default="cohort",
                   help="population whose sd sets tolerances and TASMD")
    p.add_argument("--write-profile", help="save the profile used to this JSON path")
    p.add_argument("--time-limit", type=float, default=60.0)
    p.add_argument("--gap-tolerance", type=int, default=0)
    p.add_argument("--node-limit", type=int, default=None, help="deterministic search budget")
    p.add_argument("--precision", choices=["6g", "full"], default="6g")


def _features(args) -> list[FeatureSpec]:
    if args.features:
        return [FeatureSpec.parse(t) for t in _split(args.features)]
    cols = _split(args.covariates)
    if not cols and not args.profile:
        raise ConfigError("give --covariates, --features or --profile")
    return [FeatureSpec.raw(c) for c in cols]


def _load(args, need_outcome=False, extra=()) -> tuple[Dataset, Profile | None, list[FeatureSpec]]:
    _check_input(args.input)
    profile = read_profile(args.profile) if args.profile else None
    features = profile.features if profile else _features(args)
    cols = sorted({c for f in features for c in f.columns} | set(_split(args.covariates)) | set(extra))
    roles = ColumnRoles(
        treatment=args.group_column,
        outcome=getattr(args, "outcome", None) if need_outcome or getattr(args, "outcome", None) else None,
        selection=args.selection,
        covariates=cols,
    )
    return load_dataset(args.input, roles), profile, features


def _study_mask(ds: Dataset, args) -> np.ndarray:
    if args.selection:
        sel = ds.columns[args.selection]
        if np.any(np.isnan(sel)):
            raise DataError(f"column {args.selection!r} has empty cells")
        return sel != args.target_value
    return np.ones(ds.n, dtype=bool)


def _group_labels(ds: Dataset, args, study: np.ndarray) -> list[int]:
    labels = ds.columns[args.group_column]
    if args.groups:
        try:
            return [int(g) for g in _split(args.groups)]
        except ValueError:
            raise ConfigError("group labels must be integers") from None
    present = labels[study]
    if np.any(np.isnan(present)):
        raise DataError(f"study rows with an empty {args.group_column!r} label")
    return sorted(int(v) for v in np.unique(present))


def _build_profile(ds: Dataset, args, features, study, groups, rows=None) -> Profile:
    """Targets from target rows (all rows if no selection column)."""
    rows = np.arange(ds.n) if rows is None else rows
    sel = ds.columns[args.selection][rows] if args.selection else None
    cols = {c: ds.columns[c][rows] for c in ds.columns}
    tgt = (sel == args.target_value) if sel is not None else np.ones(rows.size, bool)
    if not tgt.any():
        raise DataError("no target rows found")
    target = {c: v[tgt] for c, v in cols.items()}
    if args.scale == "pooled":
        lab = ds.columns[args.group_column][rows]
        st = study[rows]
        mats = [eval_features({c: v[st & (lab == g)] for c, v in cols.items()}, features) for g in groups]
        return profile_from_target(target, features, args.multiplier, scale_sds=pooled_sds(mats), scale="pooled")
    if args.scale == "cohort":
        return profile_from_target(target, features, args.multiplier, scale_data=cols, scale="cohort")
    return profile_from_target(target, features, args.multiplier, scale="target")


def _study_data(ds: Dataset, study: np.ndarray) -> dict:
    return {c: v[study] for c, v in ds.columns.items()}


# commands

def cmd_match(args) -> int:
    for path in (args.output, args.report, args.estimate, args.write_profile):
        _check_output(path)
    ds, profile, features = _load(args)
    study = _study_mask(ds, args)
    groups = _group_labels(ds, args, study)
    if profile is None:
        profile = _build_profile(ds, args, features, study, groups)
    if args.write_profile:
        write_profile(args.write_profile, profile)
    study_idx = np.flatnonzero(study)
    req = MatchRequest(_study_data(ds, study), args.group_column, groups, profile,
                       args.time_limit, args.gap_tolerance, args.node_limit)
    res = profile_match(req)
    matched = np.zeros(ds.n, dtype=int)
    matched[study_idx] = res.matched_mask(study_idx.size)
    write_matched(args.output, ds, matched)

    warn = []
    status = {g: s.status for g, s in res.selections.items()}
    for g, s in status.items():
        if s == "empty_only":
            warn.append(f"group {g}: no nonempty subset satisfies the balance constraints")
        elif s != "optimal":
            warn.append(f"group {g}: solver stopped with status {s}")
    if args.report:
        header = ["group", "feature", "target", "mean_before", "mean_after", "tasmd_before", "tasmd_after",
                  "n_before", "n_after", "status", "scale"]
        rows = [[str(r.group), r.feature] + [_fmt(v, args.precision) for v in
                (r.target, r.mean_before, r.mean_after, r.tasmd_before, r.tasmd_after, r.n_before, r.n_after)]
                + [status[r.group], profile.scale or ""] for r in res.report]
        write_csv(args.report, header, rows)
    if args.estimate:
        if not args.outcome or len(groups) != 2:
            raise ConfigError("--estimate needs --outcome and exactly two groups")
        rep = _match_estimate(ds, args, features, study, groups, profile, np.arange(ds.n))
        if args.bootstrap:
            fixed = profile if args.profile else None

            def boot(idx):
                return _match_estimate(ds, args, features, study, groups, fixed, idx).estimate

            rep = bootstrap_ci(boot, ds.n, rep, args.bootstrap, args.seed, 0)
        write_csv(args.estimate, CSV_FIELDS, [rep.csv_row(lambda v: _fmt(v, args.precision))])
    for w in warn:
        print(f"warning: {w}", file=sys.stderr)
    return 0


def _match_estimate(ds, args, features, study, groups, profile, rows):
    """Difference in matched outcome means, first group minus second.

    With ``profile`` None the profile is rebuilt from ``rows``, which is how
    bootstrap resamples carry the uncertainty of the target summary.
    """
    if profile is None:
        profile = _build_profile(ds, args, features, study, groups, rows)
    st = study[rows]
    data = {c: v[rows][st] for c, v in ds.columns.items()}
    res = profile_match(MatchRequest(data, args.group_column, groups, profile,
                                     args.time_limit, args.gap_tolerance, args.node_limit))
    y = data[args.outcome]
    ys = [y[res.rows[g][res.selections[g].selected == 1]] for g in groups]
    return estimate_pm(ys[0], ys[1])


def cmd_pairmatch(args) -> int:
    for path in (args.output, args.write_profile):
        _check_output(path)
    dist_cols = _split(args.distance_columns)
    ds, profile, features = _load(args, extra=dist_cols)
    study = _study_mask(ds, args)
    groups = _group_labels(ds, args, study)
    if len(groups) != 2:
        raise ConfigError("pairmatch needs exactly two groups")
    if profile is None:
        profile = _build_profile(ds, args, features, study, groups)
    if args.write_profile:
        write_profile(args.write_profile, profile)
    study_idx = np.flatnonzero(study)
    res = pairwise_cardinality_match(_study_data(ds, study), args.group_column, groups, profile,
                                     DistanceSpec(dist_cols), args.time_limit, args.gap_tolerance,
                                     args.node_limit)
    matched = np.zeros(ds.n, dtype=int)
    pair_id = np.full(ds.n, -1)
    for k, (a, b) in enumerate(res.pairs, start=1):
        for i in (study_idx[a], study_idx[b]):
            matched[i] = 1
            pair_id[i] = k
    write_matched(args.output, ds, matched, pair_id)
    if res.count == 0:
        print("warning: no balanced pairs found", file=sys.stderr)
    elif res.status != "optimal":
        print(f"warning: solver stopped with status {res.status}", file=sys.stderr)
    print(f"pairs={res.count} total_distance={_fmt(res.total_distance, args.precision)} status={res.status}",
          file=sys.stderr)
    return 0


def cmd_balance_report(args) -> int:
    _check_output(args.output)
    ds, profile, features = _load(args)
    study = _study_mask(ds, args)
    groups = _group_labels(ds, args, study)
    if profile is None:
        profile = _build_profile(ds, args, features, study, groups)
    sd = profile.scale_sds if profile.scale_sds is not None else (
        profile.tolerances / profile.multiplier if profile.multiplier else None)
    if sd is None:
        raise ConfigError("profile has neither scale_sds nor a multiplier; TASMD needs a scale")
    matched = None
    if args.matched_column:
        if args.matched_column not in ds.header:
            raise ConfigError(f"column {args.matched_column!r} not in file header")
        matched = ds.numeric(args.matched_column) == 1
    labels = ds.columns[args.group_column]
    rows = []
    for g in groups:
        mask = study & (labels == g)
        B = eval_features({c: v[mask] for c, v in ds.columns.items()}, profile.features)
        after = None
        if matched is not None:
            Bm = B[matched[mask]]
            after = Bm.mean(axis=0) if Bm.shape[0] else None
        for k, f in enumerate(profile.features):
            before = B[:, k].mean() if B.shape[0] else float("nan")
            ta = tasmd(after[k], profile.targets[k], sd[k]) if after is not None else None
            rows.append([str(g), f.name] + [_fmt(v, args.precision) for v in
                        (profile.targets[k], before, tasmd(before, profile.targets[k], sd[k]), ta)])
    header = ["group", "feature", "target", "mean", "tasmd_before", "tasmd_after"]
    if args.output:
        write_csv(args.output, header, rows)
    else:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return 0


def cmd_simulate(args) -> int:
    _check_output(args.output)
    common = dict(
        n_cohort=args.n_cohort, replicates=args.reps, bootstrap_B=args.bootstrap_B, master_seed=args.seed,
        multiplier=args.multiplier, target=args.target, scale=args.scale, gap_tolerance=args.gap_tolerance,
        node_limit=args.node_limit, selection_family=None, het_form=args.het_form,
    )
    if args.grid == "full":
        specs = []
        for fam in _split(args.selection_family):
            common["selection_family"] = fam
            specs.extend(study_grid(**common))
    else:
        specs = []
        for fam, ov, om, het, ps, m in itertools.product(
            _split(args.selection_family), _split(args.overlap), _split(args.om), _split(args.het),
            _split(args.ps), _split(args.method),
        ):
            try:
                om_i, ps_i = int(om), int(ps)
            except ValueError:
                raise ConfigError("--om and --ps take integers") from None
            specs.append(ScenarioSpec(fam, ov, om_i, het, common["het_form"], ps_i, m,
                                      **{k: v for k, v in common.items()
                                         if k not in ("selection_family", "het_form")}))
    text = run_grid(specs, resolve_workers(args.workers), args.precision)
    if args.output:
        with open(args.output, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def _read_pairs(path: str) -> dict:
    _check_input(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        need = {"pair_id", "y_treated", "y_control", "outcome_type"}
        if reader.fieldnames is None:
            raise DataError(f"{path}: file is empty")
        missing = need - set(h.strip() for h in reader.fieldnames)
        if missing:
            raise ConfigError(f"pairs file lacks columns: {', '.join(sorted(missing))}")
        by_type: dict = {}
        for i, row in enumerate(reader, start=1):
            row = {k.strip(): (v or "").strip() for k, v in row.items()}
            kind = row["outcome_type"]
            if kind not in ("binary", "continuous"):
                raise DataError(f"row {i}: outcome_type must be binary or continuous, got {kind!r}")
            try:
                yt, yc = float(row["y_treated"]), float(row["y_control"])
            except ValueError:
                raise DataError(f"row {i}: outcomes must be numeric") from None
            by_type.setdefault(kind, []).append((yt, yc))
    if not by_type:
        raise DataError(f"{path}: no pairs")
    return by_type


def _num(v, precision):
    if v is None:
        return None
    if isinstance(v, (bool, str)):
        return v
    return float(v) if precision == "full" else float(f"{float(v):.6g}")


def cmd_sensitivity(args) -> int:
    _check_output(args.output)
    by_type = _read_pairs(args.input)
    out = {}
    p = args.precision
    if "binary" in by_type:
        yt, yc = np.array(by_type["binary"]).T
        pairs = PairedBinary.from_outcomes(yt, yc)
        mc = mcnemar_test(pairs, args.mcnemar_mode)
        g = rosenbaum_gamma_binary(pairs, args.alpha)
        out["binary"] = {
            "n_pairs": int(yt.size), "n11": pairs.n11, "n10": pairs.n10, "n01": pairs.n01, "n00": pairs.n00,
            "mcnemar_mode": mc.mode, "mcnemar_statistic": _num(mc.statistic, p), "p_two_sided": _num(mc.p_two_sided, p),
            "gamma_star": _num(g.gamma_star, p), "alpha": g.alpha, "p_at_gamma1": _num(g.p_at_gamma1, p),
            "search_tolerance": g.search_tolerance, "capped": g.capped, "degenerate": g.degenerate or mc.degenerate,
        }
    if "continuous" in by_type:
        yt, yc = np.array(by_type["continuous"]).T
        d = yt - yc
        w = wilcoxon_signed_rank(d, "auto")
        g = rosenbaum_gamma_rank(d, args.alpha)
        out["continuous"] = {
            "n_pairs": int(d.size), "n_nonzero": w.n, "wilcoxon_mode": w.mode, "t_plus": _num(w.t_plus, p),
            "p_two_sided": _num(w.p_two_sided, p), "gamma_star": _num(g.gamma_star, p), "alpha": g.alpha,
            "p_at_gamma1": _num(g.p_at_gamma1, p), "search_tolerance": g.search_tolerance, "capped": g.capped,
        }
    text = json.dumps(out, indent=2, sort_keys=True) + "\n"
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="profmatch", description="Profile matching toolkit")
    parser.add_argument("--version", action="version", version=f"profmatch {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("match", help="largest balanced subset of each group")
    _add_profile_options(p)
    p.add_argument("--output", required=True, help="matched CSV (input columns plus 'matched')")
    p.add_argument("--report", help="balance report CSV (TASMD before/after per group)")
    p.add_argument("--outcome", help="outcome column for the effect estimate")
    p.add_argument("--estimate", help="estimate CSV path (needs --outcome and two groups)")
    p.add_argument("--bootstrap", type=int, default=0, help="bootstrap resamples for the estimate")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("pairmatch", help="balanced equal-size subsets of two groups, optimally paired")
    _add_profile_options(p)
    p.add_argument("--distance-columns", required=True, help="comma-separated columns for pair distances")
    p.add_argument("--output", required=True, help="CSV with 'matched' and 'pair_id' columns")
    p.set_defaults(func=cmd_pairmatch)

    p = sub.add_parser("balance-report", help="TASMD of each group against the profile")
    _add_profile_options(p)
    p.add_argument("--matched-column", help="0/1 column; adds TASMD over matched rows")
    p.add_argument("--output", help="CSV path (default stdout)")
    p.set_defaults(func=cmd_balance_report)

    p = sub.add_parser("simulate", help="Monte Carlo study; flags take comma-separated lists")
    p.add_argument("--selection-family", default="probit")
    p.add_argument("--overlap", default="high")
    p.add_argument("--om", "--outcome-model", dest="om", default="1")
    p.add_argument("--het", "--heterogeneity", dest="het", default="A")
    p.add_argument("--het-form", choices=["shift", "draft_noise"], default="shift")
    p.add_argument("--ps", "--ps-spec", dest="ps", default="1")
    p.add_argument("--method", default="pm", help=f"any of {','.join(METHODS)}")
    p.add_argument("--grid", choices=["full"], help="run the full 144-cell grid per selection family")
    p.add_argument("--n-cohort", type=int, default=1500)
    p.add_argument("--reps", "--replicates", dest="reps", type=int, default=200)
    p.add_argument("--bootstrap-B", dest="bootstrap_B", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--multiplier", type=float, default=0.05)
    p.add_argument("--target", choices=["nontrial", "cohort"], default="nontrial")
    p.add_argument("--scale", choices=["target", "cohort"], default="target")
    p.add_argument("--gap-tolerance", type=int, default=1)
    p.add_argument("--node-limit", type=int, default=1000)
    p.add_argument("--workers", type=int, default=None, help="default: all cores; PROFMATCH_WORKERS overrides")
    p.add_argument("--precision", choices=["6g", "full"], default="6g")
    p.add_argument("--output", help="CSV path (default stdout)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sensitivity", help="paired tests and Rosenbaum gamma from a pairs CSV")
    p.add_argument("--input", required=True, help="CSV with pair_id,y_treated,y_control,outcome_type")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--mcnemar-mode", choices=["exact", "chi_square"], default="exact")
    p.add_argument("--precision", choices=["6g", "full"], default="6g")
    p.add_argument("--output", help="JSON path (default stdout)")
    p.set_defaults(func=cmd_sensitivity)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ProfmatchError as exc:
        print(f"error[{exc.code}]: {exc}", file=sys.stderr)
        return exc.exit_status
    except OSError as exc:
        print(f"error[io]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
