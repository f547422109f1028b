"""Branch-and-bound for 0/1 programs with homogeneous linear constraints.

The programs solved here have the form

    maximize   c . m
    subject to A_ub m <= 0,  A_eq m = 0,  m in {0, 1}^n

with small nonnegative integer weights ``c``. The all-zero vector is always
feasible, so every search ends with a feasible incumbent.
"""

from __future__ import annotations

import heapq
import itertools
import math
import time
from dataclasses import dataclass, field

import numpy as np

from ..errors import LpError
from .lp import DualSimplex, LpState

INTEGRALITY_TOL = 1e-6
BOUND_EPS = 1e-6
AUDIT_TOL = 1e-9


@dataclass
class BinaryProgram:
    c: np.ndarray
    A_ub: np.ndarray
    A_eq: np.ndarray | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        self.A_ub = np.asarray(self.A_ub, dtype=float).reshape(-1, self.c.size)
        if self.A_eq is None:
            self.A_eq = np.zeros((0, self.c.size))
        self.A_eq = np.asarray(self.A_eq, dtype=float).reshape(-1, self.c.size)

    @property
    def n(self) -> int:
        return self.c.size

    def stacked(self) -> tuple[np.ndarray, np.ndarray]:
        A = np.vstack([self.A_ub, self.A_eq])
        eq = np.r_[np.zeros(self.A_ub.shape[0], bool), np.ones(self.A_eq.shape[0], bool)]
        return A, eq

    def is_feasible(self, m) -> bool:
        m = np.asarray(m, dtype=float)
        if self.A_ub.shape[0]:
            act = self.A_ub @ m
            tol = AUDIT_TOL * np.maximum(1.0, np.abs(self.A_ub) @ m)
            if np.any(act > tol):
                return False
        if self.A_eq.shape[0]:
            act = self.A_eq @ m
            tol = AUDIT_TOL * np.maximum(1.0, np.abs(self.A_eq) @ m)
            if np.any(np.abs(act) > tol):
                return False
        return True


@dataclass
class SearchResult:
    selected: np.ndarray
    objective: int
    upper_bound: int
    status: str
    nodes_explored: int
    root_lp: float = math.nan


@dataclass(order=True)
class _Node:
    sort_key: tuple
    lo: np.ndarray = field(compare=False)
    hi: np.ndarray = field(compare=False)
    x: np.ndarray = field(compare=False)
    state: LpState = field(compare=False)
    bound: int = field(compare=False)
    depth: int = field(compare=False)
    lp_obj: float = field(compare=False, default=math.nan)
    reduced: np.ndarray | None = field(compare=False, default=None)


def _scale_rows(A: np.ndarray) -> np.ndarray:
    if A.size == 0:
        return A
    s = np.maximum(1.0, np.abs(A).max(axis=1))
    return A / s[:, None]


class _Rounder:
    """Primal heuristics: best feasible prefix and remove/add repair."""

    def __init__(self, program: BinaryProgram):
        self.p = program
        A, eq = program.stacked()
        # rows are rescaled so violations are comparable across features;
        # candidates are still audited on the raw program
        self.A = _scale_rows(A)
        self.absA = np.abs(self.A)
        self.eq = eq

    def _violation(self, act, absact):
        tol = AUDIT_TOL * np.maximum(1.0, absact)
        over = np.where(self.eq[:, None] if act.ndim == 2 else self.eq, np.abs(act), act) - tol
        return np.maximum(over, 0.0)

    def prefix(self, x):
        order = np.lexsort((np.arange(x.size), -x))
        act = np.cumsum(self.A[:, order], axis=1)
        absact = np.cumsum(self.absA[:, order], axis=1)
        ok = ~np.any(self._violation(act, absact) > 0, axis=0)
        if not ok.any():
            return None
        val = np.cumsum(self.p.c[order])
        val = np.where(ok, val, -1.0)
        L = int(np.argmax(val)) + 1
        m = np.zeros(x.size)
        m[order[:L]] = 1.0
        return m

    def repair(self, x):
        m = (x >= 0.5).astype(float)
        A, absA = self.A, self.absA
        act = A @ m
        absact = absA @ m
        while True:
            v = self._violation(act, absact)
            if not np.any(v > 0):
                break
            members = np.flatnonzero(m)
            if members.size == 0:
                return None
            new_act = act[:, None] - A[:, members]
            new_abs = absact[:, None] - absA[:, members]
            score = self._violation(new_act, new_abs).sum(axis=0)
            # lose as little objective as possible among the best removals
            score = score + 1e-12 * self.p.c[members]
            j = int(members[np.argmin(score)])
            m[j] = 0.0
            act -= A[:, j]
            absact -= absA[:, j]
        # greedy additions, highest LP value first
        pref = np.lexsort((np.arange(x.size), -x))
        while True:
            out = pref[m[pref] == 0]
            out = out[self.p.c[out] > 0] if out.size else out
            if out.size == 0:
                break
            new_act = act[:, None] + A[:, out]
            new_abs = absact[:, None] + absA[:, out]
            ok = ~np.any(self._violation(new_act, new_abs) > 0, axis=0)
            if not ok.any():
                break
            j = int(out[np.argmax(ok)])
            m[j] = 1.0
            act += A[:, j]
            absact += absA[:, j]
        return m

    def __call__(self, x):
        best = None
        for cand in (self.prefix(x), self.repair(x)):
            if cand is not None and self.p.is_feasible(cand):
                if best is None or self.p.c @ cand > self.p.c @ best:
                    best = cand
        return best


def branch_and_bound(
    program: BinaryProgram,
    time_limit: float = 60.0,
    gap_tolerance: int = 0,
    node_limit: int | None = None,
) -> SearchResult:
    n = program.n
    A, eq = program.stacked()
    if A.shape[0] == 0:
        sel = (program.c > 0).astype(float)
        obj = int(round(program.c @ sel))
        return SearchResult(sel, obj, obj, "optimal", 0, float(obj))

    lp = DualSimplex(_scale_rows(A), program.c, equality=eq)
    rounder = _Rounder(program)
    start = time.monotonic()
    seq = itertools.count()

    best = np.zeros(n)
    best_obj = 0.0

    def offer(m):
        nonlocal best, best_obj
        if m is None:
            return
        val = float(program.c @ m)
        if val > best_obj + 0.5 and program.is_feasible(m):
            best, best_obj = m.copy(), val

    def bound_of(obj):
        return int(math.floor(obj + BOUND_EPS))

    lo0, hi0 = np.zeros(n), np.ones(n)
    try:
        root = lp.solve(lo0, hi0)
    except LpError:
        root = None
    nodes = 1
    heap: list[_Node] = []
    if root is None:
        # trivial bound; branch without LP guidance until children solve
        root_lp = float(program.c.sum())
        root_bound = bound_of(root_lp)
        heap.append(_Node((-root_bound, 0, next(seq)), lo0, hi0, None, None, root_bound, 0))
    else:
        root_lp = root.objective
        root_bound = bound_of(root.objective)

    glo, ghi = lo0.copy(), hi0.copy()

    def fix_by_reduced_cost(lp_obj, reduced, x, lo, hi):
        """Fix nonbasic columns whose move would push the bound below target."""
        if reduced is None:
            return
        need = best_obj + gap_tolerance + 1.0
        loss = np.abs(reduced) * program.c.clip(min=1.0)
        fixable = (lo != hi) & (reduced != 0.0) & (lp_obj - loss < need - BOUND_EPS)
        if fixable.any():
            v = np.round(x[fixable])
            lo[fixable] = v
            hi[fixable] = v

    def push_or_accept(res, lo, hi, depth):
        b = bound_of(res.objective)
        frac = np.minimum(res.x, 1.0 - res.x)
        if np.all(frac <= INTEGRALITY_TOL):
            offer(np.round(res.x))
            return
        offer(rounder(res.x))
        if b > best_obj + gap_tolerance + 0.5:
            heapq.heappush(
                heap,
                _Node((-b, -depth, next(seq)), lo, hi, res.x, res.state, b, depth, res.objective, res.reduced_costs),
            )

    def dive(res, lo, hi, max_steps=200):
        """Fix the least fractional column to its nearest value and re-solve."""
        lo, hi = lo.copy(), hi.copy()
        for _ in range(max_steps):
            if time.monotonic() - start > time_limit:
                return
            free = lo != hi
            frac = np.minimum(res.x, 1.0 - res.x)
            cand = np.flatnonzero(free & (frac > INTEGRALITY_TOL))
            if cand.size == 0:
                offer(np.round(res.x))
                return
            if bound_of(res.objective) <= best_obj + 0.5:
                return
            j = int(cand[np.argmin(frac[cand])])
            v = float(np.round(res.x[j]))
            for val in (v, 1.0 - v):
                lo2, hi2 = lo.copy(), hi.copy()
                lo2[j] = hi2[j] = val
                try:
                    nxt = lp.solve(lo2, hi2, res.state)
                except LpError:
                    return
                if nxt.status == "optimal":
                    break
            else:
                return
            lo, hi, res = lo2, hi2, nxt
            offer(rounder(res.x))

    if root is not None:
        push_or_accept(root, lo0, hi0, 0)
        if heap:
            dive(root, lo0, hi0)
    status = None
    while heap:
        if time.monotonic() - start > time_limit or (node_limit is not None and nodes >= node_limit):
            status = "time_limit"
            break
        node = heapq.heappop(heap)
        if node.bound <= best_obj + gap_tolerance + 0.5:
            heapq.heappush(heap, node)
            break
        if root is not None:
            # root reduced costs give fixings valid for the whole tree
            fix_by_reduced_cost(root.objective, root.reduced_costs, root.x, glo, ghi)
        nlo, nhi = np.maximum(node.lo, glo), np.minimum(node.hi, ghi)
        if np.any(nlo > nhi):
            continue
        fix_by_reduced_cost(node.lp_obj, node.reduced, node.x if node.x is not None else nlo, nlo, nhi)
        if node.x is None:
            free = np.flatnonzero(nlo != nhi)
            if free.size == 0:
                offer(nlo)
                continue
            j = int(free[0])
        else:
            frac = np.where(nlo != nhi, np.minimum(node.x, 1.0 - node.x), -1.0)
            # most fractional; argmax returns the lowest index among ties
            j = int(np.argmax(np.round(frac, 12)))
            if frac[j] <= INTEGRALITY_TOL:
                # every fractional column got fixed; re-solve the node as is
                j = -1
        children = (1.0, 0.0) if j >= 0 else (None,)
        for val in children:
            lo, hi = nlo.copy(), nhi.copy()
            if val is not None:
                lo[j] = hi[j] = val
            try:
                res = lp.solve(lo, hi, node.state)
            except LpError:
                res = None
            nodes += 1
            if res is None:
                # numerical trouble: fall back to the trivial count bound
                free = lo != hi
                if not free.any():
                    offer(lo)
                    continue
                b = int(math.floor(program.c[free].sum() + program.c @ lo + BOUND_EPS))
                if b > best_obj + gap_tolerance + 0.5:
                    heapq.heappush(heap, _Node((-b, -(node.depth + 1), next(seq)), lo, hi, None, None, b, node.depth + 1))
                continue
            if res.status != "optimal":
                continue
            push_or_accept(res, lo, hi, node.depth + 1)

    obj = int(round(best_obj))
    open_bound = max((nd.bound for nd in heap), default=obj)
    upper = max(obj, min(open_bound, root_bound))
    if status is None:
        status = "optimal" if upper <= obj else "gap_feasible"
    return SearchResult(best, obj, upper, status, nodes, root_lp)
