"""LP relaxation of a binary ILP via a bounded-variable revised primal simplex.

The relaxation replaces ``x in {0,1}`` by ``lb <= x <= ub`` (``[0, 1]`` unless
the caller tightens bounds, as branch-and-bound does). Rows with a single
nonzero are folded into the bounds and variables fixed by their bounds are
substituted out before the simplex runs, so sub-ILPs with many fixing rows
stay cheap.

Pricing is Dantzig's rule until the number of consecutive degenerate pivots
exceeds ``10 * (n + m)``; from then on Bland's rule is used, which cannot
cycle. More than ``50 * (n + m)`` iterations raises :class:`SolverStall`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ilp import Ilp

OPTIMAL = "Optimal"
INFEASIBLE = "Infeasible"
UNBOUNDED = "Unbounded"

_DJ_TOL = 1e-9
_PIV_TOL = 1e-9
_PHASE1_TOL = 1e-7
_REFACTOR_EVERY = 50


class SolverStall(RuntimeError):
    pass


@dataclass
class LpResult:
    status: str
    values: np.ndarray
    objective: float
    iterations: int
    duals: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


class _Simplex:
    """Dense revised simplex for ``min c.x, A x + s = b, lb <= x <= ub, s >= 0``."""

    def __init__(self, c, a, b, lb, ub):
        m, n = a.shape
        self.m, self.n = m, n
        x0 = lb.copy()
        resid = b - a @ x0
        art_rows = np.flatnonzero(resid < 0)
        p = art_rows.size
        self.n_cols = n + m + p
        mat = np.zeros((m, self.n_cols))
        mat[:, :n] = a
        mat[:, n:n + m] = np.eye(m)
        for k, i in enumerate(art_rows):
            mat[i, n + m + k] = -1.0
        self.mat = mat
        self.b = b
        self.lb = np.concatenate([lb, np.zeros(m + p)])
        self.ub = np.concatenate([ub, np.full(m, np.inf), np.full(p, np.inf)])
        self.c = c
        self.x = np.concatenate([x0, np.zeros(m + p)])
        basis = np.arange(n, n + m)
        for k, i in enumerate(art_rows):
            basis[i] = n + m + k
        self.basis = basis
        self.x[basis] = np.abs(resid)
        self.at_upper = np.zeros(self.n_cols, dtype=bool)
        self.is_basic = np.zeros(self.n_cols, dtype=bool)
        self.is_basic[basis] = True
        self.binv = np.linalg.inv(mat[:, basis])
        self.n_art = p
        self.iterations = 0
        self.limit = 50 * (n + m)
        self.degenerate_run = 0
        self.bland = False

    def refactor(self):
        self.binv = np.linalg.inv(self.mat[:, self.basis])
        nonbasic = ~self.is_basic
        rhs = self.b - self.mat[:, nonbasic] @ self.x[nonbasic]
        self.x[self.basis] = self.binv @ rhs

    def run(self, cost) -> str:
        m = self.m
        since_refactor = 0
        while True:
            if self.iterations >= self.limit:
                raise SolverStall(f"simplex did not converge in {self.limit} iterations")
            y = cost[self.basis] @ self.binv
            d = cost - y @ self.mat
            movable = (~self.is_basic) & (self.ub > self.lb)
            improving = movable & np.where(self.at_upper, d > _DJ_TOL, d < -_DJ_TOL)
            cand = np.flatnonzero(improving)
            if cand.size == 0:
                self.y, self.d = y, d
                return OPTIMAL
            if self.bland:
                j = int(cand[0])
            else:
                j = int(cand[np.argmax(np.abs(d[cand]))])
            delta = -1.0 if self.at_upper[j] else 1.0
            alpha = self.binv @ self.mat[:, j]
            rate = delta * alpha
            xb = self.x[self.basis]
            lbb, ubb = self.lb[self.basis], self.ub[self.basis]
            ratios = np.full(m, np.inf)
            dec = rate > _PIV_TOL
            inc = rate < -_PIV_TOL
            ratios[dec] = (xb[dec] - lbb[dec]) / rate[dec]
            ratios[inc] = (ubb[inc] - xb[inc]) / -rate[inc]
            ratios = np.maximum(ratios, 0.0)
            t_flip = self.ub[j] - self.lb[j]
            t_row = ratios.min() if m else np.inf
            if not np.isfinite(t_row) and not np.isfinite(t_flip):
                return UNBOUNDED
            self.iterations += 1
            if t_flip <= t_row:
                t = t_flip
                self.x[j] += delta * t
                self.x[self.basis] = xb - t * rate
                self.at_upper[j] = not self.at_upper[j]
            else:
                t = t_row
                ties = np.flatnonzero(ratios <= t_row + 1e-12)
                if self.bland:
                    p = int(ties[np.argmin(self.basis[ties])])
                else:
                    p = int(ties[np.argmax(np.abs(rate[ties]))])
                leaving = int(self.basis[p])
                self.x[j] += delta * t
                self.x[self.basis] = xb - t * rate
                self.at_upper[leaving] = bool(rate[p] < 0)
                self.x[leaving] = self.ub[leaving] if self.at_upper[leaving] else self.lb[leaving]
                self.is_basic[leaving] = False
                self.is_basic[j] = True
                self.at_upper[j] = False
                self.basis[p] = j
                piv = alpha[p]
                row = self.binv[p] / piv
                self.binv -= np.outer(alpha, row)
                self.binv[p] = row
                since_refactor += 1
                if since_refactor >= _REFACTOR_EVERY:
                    self.refactor()
                    since_refactor = 0
            if t <= 1e-12:
                self.degenerate_run += 1
                if self.degenerate_run > 10 * (self.n + m):
                    self.bland = True
            else:
                self.degenerate_run = 0

    def solve(self):
        n, m, p = self.n, self.m, self.n_art
        if p:
            cost1 = np.zeros(self.n_cols)
            cost1[n + m:] = 1.0
            self.run(cost1)
            infeas = float(self.x[n + m:].sum())
            if infeas > _PHASE1_TOL * max(1.0, float(np.abs(self.b).max(initial=0.0))):
                return INFEASIBLE
            self.ub[n + m:] = 0.0
            self.x[n + m:] = np.clip(self.x[n + m:], 0.0, 0.0)
            self.refactor()
        cost2 = np.zeros(self.n_cols)
        cost2[:n] = self.c
        return self.run(cost2)


class LpModel:
    """LP relaxation of an ILP prepared for repeated solves under varying bounds."""

    def __init__(self, ilp: Ilp):
        self.ilp = ilp
        n = ilp.n
        self.c = np.asarray(ilp.objective, dtype=np.float64)
        self.base_lb = np.zeros(n)
        self.base_ub = np.ones(n)
        self.empty_ok = True
        general = []
        for i, (idx, coef) in enumerate(zip(ilp.row_indices, ilp.row_coefs)):
            nz = coef != 0
            idx, coef = idx[nz], coef[nz]
            b = float(ilp.rhs[i])
            if idx.size == 0:
                if b < -1e-9:
                    self.empty_ok = False
            elif idx.size == 1:
                j, a = int(idx[0]), float(coef[0])
                if a > 0:
                    self.base_ub[j] = min(self.base_ub[j], b / a)
                else:
                    self.base_lb[j] = max(self.base_lb[j], b / a)
            else:
                general.append(i)
        self.rows = np.asarray(general, dtype=np.int64)
        self.a = ilp.dense_a[self.rows] if len(general) else np.zeros((0, n))
        self.b = ilp.rhs[self.rows] if len(general) else np.zeros(0)

    def solve(self, lb=None, ub=None) -> LpResult:
        ilp = self.ilp
        n = ilp.n
        lb = self.base_lb if lb is None else np.maximum(self.base_lb, lb)
        ub = self.base_ub if ub is None else np.minimum(self.base_ub, ub)
        infeasible = LpResult(INFEASIBLE, np.zeros(n), np.inf, 0)
        if not self.empty_ok or np.any(lb > ub + 1e-9):
            return infeasible
        ub = np.maximum(ub, lb)
        free = ub - lb > 1e-12
        x = lb.copy()
        b = self.b - self.a[:, ~free] @ x[~free]
        a = self.a[:, free]
        active = np.any(a != 0, axis=1)
        if np.any(b[~active] < -1e-9):
            return infeasible
        a, b = a[active], b[active]
        duals = np.zeros(ilp.m)
        rc = self.c.copy()
        iters = 0
        if free.any():
            sx = _Simplex(self.c[free], a, b, lb[free], ub[free])
            status = sx.solve()
            iters = sx.iterations
            if status != OPTIMAL:
                return LpResult(status, np.zeros(n), np.inf if status == INFEASIBLE else -np.inf, iters)
            x[free] = np.clip(sx.x[:sx.n], lb[free], ub[free])
            y = sx.y
            duals[self.rows[active]] = y
            if self.rows.size:
                rc = self.c - duals[self.rows] @ self.a
        return LpResult(OPTIMAL, x, float(self.c @ x), iters, duals, rc)


def solve_lp_relaxation(ilp: Ilp, lb=None, ub=None) -> LpResult:
    return LpModel(ilp).solve(lb, ub)
