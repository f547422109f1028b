"""Profile matching per group, the copy reformulation, and pair matching."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .balance import Profile, eval_features, tasmd
from .errors import ColumnError, DomainError, ProfmatchError, SizeError
from .solver import (
    BalanceProblem,
    BinaryProgram,
    SelectionResult,
    _to_selection,
    audit_selection,
    balance_rows,
    branch_and_bound,
    solve_max_balanced_subset,
)

TIGHT_TOL = 1e-9


@dataclass
class MatchRequest:
    data: Mapping[str, np.ndarray]
    group_column: str
    groups: Sequence
    profile: Profile
    time_limit: float = 60.0
    gap_tolerance: int = 0
    node_limit: int | None = None


@dataclass
class BalanceRow:
    group: object
    feature: str
    target: float
    mean_before: float
    mean_after: float
    tasmd_before: float
    tasmd_after: float
    n_before: int
    n_after: int


@dataclass
class MatchResult:
    selections: dict
    rows: dict  # group -> row indices into the dataset
    report: list[BalanceRow] = field(default_factory=list)

    def matched_mask(self, n: int) -> np.ndarray:
        out = np.zeros(n, dtype=int)
        for g, sel in self.selections.items():
            out[self.rows[g][sel.selected == 1]] = 1
        return out


def _annotate(exc: ProfmatchError, label) -> ProfmatchError:
    exc.args = (f"group {label!r}: {exc.args[0] if exc.args else exc}",) + exc.args[1:]
    return exc


def group_rows(data: Mapping[str, np.ndarray], group_column: str, label) -> np.ndarray:
    if group_column not in data:
        raise ColumnError(f"column {group_column!r} not found")
    col = np.asarray(data[group_column])
    if col.dtype.kind in "biuf":
        try:
            idx = np.flatnonzero(col == float(label))
        except (TypeError, ValueError):
            idx = np.zeros(0, dtype=int)
    else:
        idx = np.flatnonzero(col.astype(str) == str(label))
    if idx.size == 0:
        raise DomainError(f"group {label!r} is empty")
    return idx


def _subset(data: Mapping[str, np.ndarray], idx: np.ndarray) -> dict:
    return {k: np.asarray(v)[idx] for k, v in data.items()}


def _scale_for_report(profile: Profile) -> np.ndarray | None:
    if profile.scale_sds is not None:
        return profile.scale_sds
    if profile.multiplier:
        return profile.tolerances / profile.multiplier
    return None


def balance_report(B: np.ndarray, selected: np.ndarray, profile: Profile, label) -> list[BalanceRow]:
    """TASMD of every profile feature before and after matching."""
    sd = _scale_for_report(profile)
    rows = []
    before = B.mean(axis=0) if B.shape[0] else np.full(B.shape[1], np.nan)
    sel = selected == 1
    after = B[sel].mean(axis=0) if sel.any() else np.full(B.shape[1], np.nan)
    for k, f in enumerate(profile.features):
        if sd is None or sd[k] <= 0:
            tb = ta = float("nan")
        else:
            tb = tasmd(before[k], profile.targets[k], sd[k])
            ta = tasmd(after[k], profile.targets[k], sd[k]) if sel.any() else float("nan")
        rows.append(
            BalanceRow(label, f.name, float(profile.targets[k]), float(before[k]), float(after[k]),
                       tb, ta, int(B.shape[0]), int(sel.sum()))
        )
    return rows


def group_problem(data, profile: Profile, time_limit=60.0, gap_tolerance=0, node_limit=None):
    """Balance problem for one group and its feature matrix."""
    B = eval_features(data, profile.features)
    return BalanceProblem(B - profile.targets, profile.tolerances, time_limit, gap_tolerance, node_limit), B


def profile_match(request: MatchRequest) -> MatchResult:
    """Largest balanced subset of each group, solved independently."""
    selections, rows, report = {}, {}, []
    for label in request.groups:
        try:
            idx = group_rows(request.data, request.group_column, label)
            problem, B = group_problem(_subset(request.data, idx), request.profile,
                                       request.time_limit, request.gap_tolerance, request.node_limit)
            sel = solve_max_balanced_subset(problem)
        except ProfmatchError as exc:
            raise _annotate(exc, label)
        selections[label] = sel
        rows[label] = idx
        report.extend(balance_report(B, sel.selected, request.profile, label))
    return MatchResult(selections, rows, report)


def _copy_program(problems: Sequence[BalanceProblem]) -> BinaryProgram:
    """Stack groups side by side with equal counts; the first group is the objective."""
    sizes = [p.n for p in problems]
    N = sum(sizes)
    offsets = np.cumsum([0] + sizes)
    blocks = []
    for g, p in enumerate(problems):
        if p.k == 0:
            continue
        R = balance_rows(p.deviations, p.tolerances)
        full = np.zeros((R.shape[0], N))
        full[:, offsets[g]:offsets[g + 1]] = R
        blocks.append(full)
    A_ub = np.vstack(blocks) if blocks else np.zeros((0, N))
    A_eq = []
    for g in range(1, len(problems)):
        row = np.zeros(N)
        row[offsets[0]:offsets[1]] = 1.0
        row[offsets[g]:offsets[g + 1]] = -1.0
        A_eq.append(row)
    c = np.zeros(N)
    c[: sizes[0]] = 1.0
    return BinaryProgram(c, A_ub, np.array(A_eq).reshape(-1, N))


def profile_match_via_copy(problem: BalanceProblem) -> SelectionResult:
    """Solve the duplicated-group formulation and return the original side.

    The group and an identical copy must each be balanced and have equal
    counts. The optimum equals the direct formulation's; this path exists as
    a cross-check of the solver.
    """
    n = problem.n
    if problem.k == 0 or n == 0:
        return solve_max_balanced_subset(problem)
    program = _copy_program([problem, problem])
    res = branch_and_bound(program, problem.time_limit, problem.gap_tolerance, problem.node_limit)
    out = _to_selection(res)
    out.selected = out.selected[:n]
    if not audit_selection(problem, out.selected):
        raise AssertionError("copy formulation returned an unbalanced selection")
    return out


@dataclass
class DistanceSpec:
    columns: list[str]
    scales: np.ndarray | None = None  # default: pooled sd of each column, 1 if zero


@dataclass
class PairMatchResult:
    selected_a: np.ndarray  # row indices into the dataset
    selected_b: np.ndarray
    pairs: list[tuple[int, int]]  # (row index in A, row index in B)
    total_distance: float
    status: str
    upper_bound: int

    @property
    def count(self) -> int:
        return len(self.pairs)


def pairwise_cardinality_match(
    data: Mapping[str, np.ndarray],
    group_column: str,
    groups: Sequence,
    profile: Profile,
    distance: DistanceSpec,
    time_limit: float = 60.0,
    gap_tolerance: int = 0,
    node_limit: int | None = None,
) -> PairMatchResult:
    """Largest equal-size balanced subsets of two groups, then optimal pairing."""
    if len(groups) != 2:
        raise SizeError("pair matching needs exactly two groups")
    idx, problems = [], []
    for label in groups:
        try:
            rows = group_rows(data, group_column, label)
            p, _ = group_problem(_subset(data, rows), profile, time_limit, gap_tolerance, node_limit)
        except ProfmatchError as exc:
            raise _annotate(exc, label)
        idx.append(rows)
        problems.append(p)
    na = problems[0].n
    program = _copy_program(problems)
    res = branch_and_bound(program, time_limit, gap_tolerance, node_limit)
    sel = np.round(res.selected).astype(int)
    sa, sb = idx[0][sel[:na] == 1], idx[1][sel[na:] == 1]
    for p, s in zip(problems, (sel[:na], sel[na:])):
        if not audit_selection(p, s):
            raise AssertionError("pair matching returned an unbalanced selection")
    if sa.size == 0:
        return PairMatchResult(sa, sb, [], 0.0, "empty_only" if res.status == "optimal" else res.status,
                               res.upper_bound)
    XA = np.column_stack([np.asarray(data[c], dtype=float)[sa] for c in distance.columns]) if distance.columns else np.zeros((sa.size, 0))
    XB = np.column_stack([np.asarray(data[c], dtype=float)[sb] for c in distance.columns]) if distance.columns else np.zeros((sb.size, 0))
    scales = distance.scales
    if scales is None:
        both = np.vstack([XA, XB])
        scales = both.std(axis=0, ddof=1) if both.shape[0] > 1 else np.ones(both.shape[1])
        scales = np.where(scales > 0, scales, 1.0)
    pairs, total = optimal_rematch(XA, XB, scales)
    return PairMatchResult(sa, sb, [(int(sa[i]), int(sb[j])) for i, j in pairs], total, res.status, res.upper_bound)


def distance_matrix(XA: np.ndarray, XB: np.ndarray, scales) -> np.ndarray:
    """Sum over columns of ``|a - b| / scale``."""
    XA = np.asarray(XA, dtype=float).reshape(len(XA), -1)
    XB = np.asarray(XB, dtype=float).reshape(len(XB), -1)
    s = np.asarray(scales, dtype=float)
    return (np.abs(XA[:, None, :] - XB[None, :, :]) / s).sum(axis=2)


def optimal_rematch(XA, XB, scales) -> tuple[list[tuple[int, int]], float]:
    """Min-distance perfect pairing of two equal-size samples."""
    XA, XB = np.asarray(XA), np.asarray(XB)
    if len(XA) != len(XB):
        raise SizeError(f"re-matching needs equal sizes, got {len(XA)} and {len(XB)}")
    C = distance_matrix(XA, XB, scales)
    perm = min_cost_assignment(C)
    pairs = [(i, int(j)) for i, j in enumerate(perm)]
    return pairs, float(C[np.arange(len(perm)), perm].sum())


def hungarian(C) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Shortest augmenting path Hungarian method, O(n^3).

    Returns the row-to-column assignment and dual potentials ``u``, ``v``
    with ``u_i + v_j <= C_ij`` and equality on assigned pairs.
    """
    C = np.asarray(C, dtype=float)
    n = C.shape[0]
    if C.shape != (n, n):
        raise SizeError("cost matrix must be square")
    INF = np.inf
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    owner = np.zeros(n + 1, dtype=int)  # column -> row (1-based, 0 = free)
    way = np.zeros(n + 1, dtype=int)
    for i in range(1, n + 1):
        owner[0] = i
        j0 = 0
        minv = np.full(n + 1, INF)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = owner[j0]
            cur = C[i0 - 1] - u[i0] - v[1:]
            free = ~used[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            cand = np.where(free, minv[1:], INF)
            j1 = int(np.argmin(cand)) + 1
            delta = cand[j1 - 1]
            u[owner[used]] += delta
            v[used] -= delta
            minv[1:][free] -= delta
            j0 = j1
            if owner[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            owner[j0] = owner[j1]
            j0 = j1
    assign = np.zeros(n, dtype=int)
    for j in range(1, n + 1):
        assign[owner[j] - 1] = j - 1
    return assign, u[1:], v[1:]


def min_cost_assignment(C) -> np.ndarray:
    """Optimal assignment; among optima, the lexicographically smallest.

    Optimal assignments are exactly the perfect matchings on edges that are
    tight under optimal duals. Rows are fixed in order to the smallest tight
    column that still leaves a perfect tight matching for the rest.
    """
    C = np.asarray(C, dtype=float)
    n = C.shape[0]
    if n == 0:
        return np.zeros(0, dtype=int)
    assign, u, v = hungarian(C)
    scale = max(1.0, float(np.abs(C).max()))
    tight = np.abs(C - u[:, None] - v[None, :]) <= TIGHT_TOL * scale
    row_of = np.empty(n, dtype=int)
    row_of[assign] = np.arange(n)
    for i in range(n):
        for j in np.flatnonzero(tight[i]):
            if j == assign[i]:
                break
            if _reroute(i, j, assign, row_of, tight):
                break
    return assign


def _reroute(i, j, assign, row_of, tight) -> bool:
    """Move row ``i`` to column ``j`` keeping a perfect tight matching.

    The row holding ``j`` must reach column ``assign[i]`` by an alternating
    path through rows after ``i`` (earlier rows are already fixed).
    """
    target = assign[i]
    start = row_of[j]
    if start < i:
        return False
    n = assign.size
    seen = np.zeros(n, dtype=bool)
    seen[j] = True
    parent = {}  # column -> row that reaches it
    stack = [start]
    found = -1
    while stack and found < 0:
        r = stack.pop()
        for col in np.flatnonzero(tight[r] & ~seen):
            seen[col] = True
            parent[col] = r
            if col == target:
                found = col
                break
            nxt = row_of[col]
            if nxt > i:
                stack.append(nxt)
    if found < 0:
        return False
    # shift along the path: each row on it takes the column it reached
    col = found
    while True:
        r = parent[col]
        prev = assign[r]
        assign[r] = col
        row_of[col] = r
        if r == start:
            break
        col = prev
    assign[i] = j
    row_of[j] = i
    return True
