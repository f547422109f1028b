"""Largest balanced subset: maximize the number of selected units subject to

    | sum_t m_t d_tk | <= delta_k * sum_t m_t     for every balance feature k

with ``d_tk`` the deviation of unit ``t`` from the profile on feature ``k``.
This is a multidimensional knapsack with a unit objective.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DomainError, SizeError
from .bnb import AUDIT_TOL, BinaryProgram, SearchResult, branch_and_bound
from .lp import DualSimplex

__all__ = [
    "BalanceProblem",
    "SelectionResult",
    "BinaryProgram",
    "balance_rows",
    "solve_lp_relaxation",
    "solve_max_balanced_subset",
    "brute_force_reference",
    "audit_selection",
    "branch_and_bound",
]

BRUTE_FORCE_MAX = 25


@dataclass
class BalanceProblem:
    deviations: np.ndarray  # n x K, entry d_tk = B_k(X_t) - x*_k
    tolerances: np.ndarray  # K
    time_limit: float = 60.0
    gap_tolerance: int = 0
    node_limit: int | None = None  # deterministic alternative to time_limit

    def __post_init__(self):
        self.deviations = np.asarray(self.deviations, dtype=float)
        if self.deviations.ndim == 1:
            self.deviations = self.deviations[:, None]
        self.tolerances = np.atleast_1d(np.asarray(self.tolerances, dtype=float))
        if self.deviations.shape[1] != self.tolerances.size:
            raise DomainError("deviations and tolerances disagree on K")
        if not np.all(np.isfinite(self.deviations)) or not np.all(np.isfinite(self.tolerances)):
            raise DomainError("balance problem entries must be finite")
        if np.any(self.tolerances < 0):
            raise DomainError("tolerances must be nonnegative")
        if self.gap_tolerance < 0:
            raise DomainError("gap_tolerance must be >= 0")

    @property
    def n(self) -> int:
        return self.deviations.shape[0]

    @property
    def k(self) -> int:
        return self.deviations.shape[1]


@dataclass
class SelectionResult:
    selected: np.ndarray  # 0/1 ints, length n
    objective: int
    upper_bound: int
    status: str  # optimal | gap_feasible | time_limit | empty_only
    nodes_explored: int
    root_lp: float = float("nan")

    @property
    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.selected)


def balance_rows(deviations: np.ndarray, tolerances: np.ndarray) -> np.ndarray:
    """The ``2K x n`` matrix of ``<= 0`` rows encoding the two-sided constraints."""
    D = np.asarray(deviations, dtype=float).T
    tol = np.asarray(tolerances, dtype=float)[:, None]
    return np.vstack([D - tol, -D - tol])


def audit_selection(problem: BalanceProblem, selected) -> bool:
    """Recheck every balance constraint on the raw deviations."""
    m = np.asarray(selected, dtype=float)
    s = m.sum()
    act = np.abs(m @ problem.deviations)
    scale = np.maximum(1.0, np.abs(problem.deviations).T @ m + problem.tolerances * s)
    return bool(np.all(act <= problem.tolerances * s + AUDIT_TOL * scale))


def solve_lp_relaxation(problem: BalanceProblem, fixed: dict[int, int] | None = None):
    """LP bound of the balance problem honouring ``fixed`` {index: 0 or 1}."""
    n = problem.n
    lo, hi = np.zeros(n), np.ones(n)
    for i, v in (fixed or {}).items():
        if v not in (0, 1):
            raise DomainError("fixed values must be 0 or 1")
        lo[i] = hi[i] = v
    if problem.k == 0:
        return {"lp_objective": float(n), "fractional_solution": hi.copy(), "status": "optimal"}
    A = balance_rows(problem.deviations, problem.tolerances)
    A = A / np.maximum(1.0, np.abs(A).max(axis=1))[:, None]
    res = DualSimplex(A, np.ones(n)).solve(lo, hi)
    if res.status != "optimal":
        return {"lp_objective": -np.inf, "fractional_solution": None, "status": "infeasible"}
    return {"lp_objective": res.objective, "fractional_solution": res.x, "status": "optimal"}


def _to_selection(res: SearchResult) -> SelectionResult:
    sel = np.round(res.selected).astype(int)
    status = res.status
    if res.objective == 0 and status == "optimal":
        status = "empty_only"
    return SelectionResult(sel, int(res.objective), int(res.upper_bound), status, res.nodes_explored, res.root_lp)


def solve_max_balanced_subset(problem: BalanceProblem) -> SelectionResult:
    n = problem.n
    if problem.k == 0 or n == 0:
        sel = np.ones(n, dtype=int)
        status = "optimal" if n else "empty_only"
        return SelectionResult(sel, n, n, status, 0, float(n))
    program = BinaryProgram(np.ones(n), balance_rows(problem.deviations, problem.tolerances))
    res = branch_and_bound(program, problem.time_limit, problem.gap_tolerance, problem.node_limit)
    out = _to_selection(res)
    if not audit_selection(problem, out.selected):
        raise AssertionError("solver returned a selection that fails the balance audit")
    return out


def brute_force_reference(problem: BalanceProblem) -> SelectionResult:
    """Exhaustive search; ties go to the lexicographically smallest selector."""
    n, k = problem.n, problem.k
    if n > BRUTE_FORCE_MAX:
        raise SizeError(f"brute force limited to n <= {BRUTE_FORCE_MAX}, got {n}")
    if n == 0:
        return SelectionResult(np.zeros(0, dtype=int), 0, 0, "empty_only", 1, 0.0)
    D, tol = problem.deviations, problem.tolerances
    absD = np.abs(D)
    # bit (n-1-t) of the code holds m_t, so numeric order is lexicographic order
    lo_bits = min(n, 14)
    hi_bits = n - lo_bits
    lo_idx = np.arange(n - lo_bits, n)
    codes_lo = np.arange(1 << lo_bits, dtype=np.int64)
    bits_lo = ((codes_lo[:, None] >> (n - 1 - lo_idx)) & 1).astype(float)
    sum_lo, abs_lo, cnt_lo = bits_lo @ D[lo_idx], bits_lo @ absD[lo_idx], bits_lo.sum(axis=1)
    best_cnt, best_code = -1, None
    for h in range(1 << hi_bits):
        hi_sel = np.array([(h >> (hi_bits - 1 - t)) & 1 for t in range(hi_bits)], dtype=float)
        base_sum = hi_sel @ D[:hi_bits] if hi_bits else np.zeros(k)
        base_abs = hi_sel @ absD[:hi_bits] if hi_bits else np.zeros(k)
        cnt = cnt_lo + hi_sel.sum()
        act = np.abs(sum_lo + base_sum)
        scale = np.maximum(1.0, abs_lo + base_abs + cnt[:, None] * tol)
        ok = np.all(act <= cnt[:, None] * tol + AUDIT_TOL * scale, axis=1)
        if not ok.any():
            continue
        c = np.where(ok, cnt, -1)
        top = c.max()
        if top > best_cnt:
            best_cnt = int(top)
            best_code = (h << lo_bits) | int(np.argmax(c == top))
    sel = np.array([(best_code >> (n - 1 - t)) & 1 for t in range(n)], dtype=int)
    obj = int(sel.sum())
    return SelectionResult(sel, obj, obj, "optimal" if obj else "empty_only", 1 << n, float("nan"))
