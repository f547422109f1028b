"""Bounded-variable dual simplex for small-row, many-column LPs.

Solves ``max c.x  s.t.  A x + s = b,  lo <= x <= hi,  s in [0, inf)`` (or
``s in [0, 0]`` for equality rows). The basis inverse is kept explicitly; it
is at most ``m x m`` with ``m`` the number of rows, which is tiny for balance
problems.

A basis that is dual feasible stays dual feasible when variable bounds move,
so branch-and-bound children restart from their parent's basis. From scratch
the slack basis with every profitable column at its upper bound is dual
feasible. The ratio test passes over breakpoints whose variables can flip
bound (long-step ratio test), which keeps the pivot count near ``m`` for
0/1 boxes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import LpError

FEAS_TOL = 1e-9
PIVOT_TOL = 1e-10
DUAL_TOL = 1e-12
REFACTOR_EVERY = 50


@dataclass
class LpState:
    """Warm-start data: basic column indices and nonbasic bound flags."""

    basis: np.ndarray
    at_upper: np.ndarray


@dataclass
class LpResult:
    status: str  # "optimal" or "infeasible"
    x: np.ndarray | None
    objective: float
    state: LpState | None
    iterations: int
    reduced_costs: np.ndarray | None = None  # structural columns, min-form


class DualSimplex:
    def __init__(self, A, c, b=None, equality=None, max_iter=None):
        A = np.asarray(A, dtype=float)
        self.m, self.n = A.shape
        m, n = self.m, self.n
        self.full = np.hstack([A, np.eye(m)])
        self.cost = np.concatenate([-np.asarray(c, dtype=float), np.zeros(m)])
        self.b = np.zeros(m) if b is None else np.asarray(b, dtype=float)
        eq = np.zeros(m, dtype=bool) if equality is None else np.asarray(equality, dtype=bool)
        self.slack_hi = np.where(eq, 0.0, np.inf)
        self.max_iter = max_iter or 20 * (n + m) + 1000

    def cold_state(self) -> LpState:
        basis = np.arange(self.n, self.n + self.m)
        at_upper = np.zeros(self.n + self.m, dtype=bool)
        at_upper[: self.n] = self.cost[: self.n] < 0
        return LpState(basis, at_upper)

    def solve(self, lo, hi, state: LpState | None = None) -> LpResult:
        m, n = self.m, self.n
        N = n + m
        A = self.full
        cost = self.cost
        lo = np.concatenate([np.asarray(lo, dtype=float), np.zeros(m)])
        hi = np.concatenate([np.asarray(hi, dtype=float), self.slack_hi])
        if state is None:
            state = self.cold_state()
        basis = state.basis.copy()
        at_upper = state.at_upper.copy()
        fixed = lo == hi
        is_basic = np.zeros(N, dtype=bool)
        is_basic[basis] = True

        def nonbasic_values():
            v = np.where(at_upper, hi, lo)
            v[is_basic] = 0.0
            return v

        def refactor():
            try:
                Binv = np.linalg.inv(A[:, basis])
            except np.linalg.LinAlgError:
                raise LpError("singular basis") from None
            xn = nonbasic_values()
            xb = Binv @ (self.b - A @ xn)
            d = cost - (cost[basis] @ Binv) @ A
            d[basis] = 0.0
            return Binv, xn, xb, d

        Binv, xn, xb, d = refactor()
        stall = 0
        best_infeas = np.inf
        it = 0
        while True:
            if it and it % REFACTOR_EVERY == 0:
                Binv, xn, xb, d = refactor()
            lo_b, hi_b = lo[basis], hi[basis]
            below = lo_b - xb
            above = xb - hi_b
            viol = np.maximum(below, above)
            r = int(np.argmax(viol))
            if viol[r] <= FEAS_TOL:
                # confirm on a fresh factorisation before declaring optimality
                Binv, xn, xb, d = refactor()
                viol = np.maximum(lo[basis] - xb, xb - hi[basis])
                r = int(np.argmax(viol))
                if viol[r] <= FEAS_TOL:
                    break
                lo_b, hi_b = lo[basis], hi[basis]
                below = lo_b - xb
            it += 1
            if it > self.max_iter:
                raise LpError(f"dual simplex exceeded {self.max_iter} iterations")

            total_infeas = float(np.maximum(viol, 0).sum())
            if total_infeas < best_infeas - 1e-12:
                best_infeas = total_infeas
                stall = 0
            else:
                stall += 1
            bland = stall > 50
            if bland:
                infeasible_rows = np.flatnonzero(viol > FEAS_TOL)
                r = int(infeasible_rows[np.argmin(basis[infeasible_rows])])

            going_down = below[r] > 0  # basic var must rise to its lower bound
            target = lo_b[r] if going_down else hi_b[r]
            slope = abs(xb[r] - target)
            alpha = Binv[r] @ A
            movable = ~is_basic & ~fixed
            if going_down:
                elig = movable & (((~at_upper) & (alpha < -PIVOT_TOL)) | (at_upper & (alpha > PIVOT_TOL)))
            else:
                elig = movable & (((~at_upper) & (alpha > PIVOT_TOL)) | (at_upper & (alpha < -PIVOT_TOL)))
            cand = np.flatnonzero(elig)
            if cand.size == 0:
                return LpResult("infeasible", None, -np.inf, None, it)
            ratios = np.maximum(np.abs(d[cand]), 0.0) / np.abs(alpha[cand])
            # sort by ratio, then larger |alpha|, then index
            order = np.lexsort((cand, -np.abs(alpha[cand]), ratios))
            cand, ratios = cand[order], ratios[order]
            if bland:
                tmin = ratios[0]
                ties = cand[ratios <= tmin + DUAL_TOL]
                q = int(ties.min())
                passed = np.empty(0, dtype=int)
            else:
                widths = hi[cand] - lo[cand]
                drops = np.abs(alpha[cand]) * widths
                remaining = slope - np.cumsum(drops)
                # first breakpoint where the slope no longer stays positive
                stop = np.flatnonzero(~(remaining > FEAS_TOL))
                if stop.size == 0:
                    return LpResult("infeasible", None, -np.inf, None, it)
                k = int(stop[0])
                q = int(cand[k])
                passed = cand[:k]
            if passed.size:
                delta = np.where(at_upper[passed], lo[passed] - hi[passed], hi[passed] - lo[passed])
                at_upper[passed] = ~at_upper[passed]
                xn[passed] += delta
                xb -= Binv @ (A[:, passed] @ delta)
            alpha_q = Binv @ A[:, q]
            arq = alpha_q[r]
            if abs(arq) <= PIVOT_TOL:
                Binv, xn, xb, d = refactor()
                continue
            step = (xb[r] - target) / arq
            xq_new = xn[q] + step
            xb -= step * alpha_q
            theta = d[q] / alpha[q]
            d -= theta * alpha
            leave = int(basis[r])
            d[leave] = -theta
            d[q] = 0.0
            # basis change
            is_basic[leave] = False
            is_basic[q] = True
            at_upper[leave] = not going_down
            at_upper[q] = False
            xn[leave] = target
            xn[q] = 0.0
            basis[r] = q
            xb[r] = xq_new
            pivot_row = Binv[r] / arq
            Binv -= np.outer(alpha_q, pivot_row)
            Binv[r] = pivot_row

        x = nonbasic_values()
        x[basis] = xb
        xs = np.clip(x[:n], lo[:n], hi[:n])
        obj = float(-cost[:n] @ xs)
        red = d[:n].copy()
        red[is_basic[:n]] = 0.0
        return LpResult("optimal", xs, obj, LpState(basis, at_upper), it, red)
