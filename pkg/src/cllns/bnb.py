"""Best-first branch-and-bound for binary ILPs with an incumbent log.

Each node is bounded by its LP relaxation. The branching variable is the
most fractional one (lowest index on ties). After branching, the child that
agrees with the LP rounding is explored immediately (a depth-first dive)
and the sibling goes onto a best-bound heap. Every strict improvement of the
incumbent is recorded, since mining training samples needs the
intermediate solutions as well as the final one.
"""
from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .ilp import Ilp, Solution, evaluate
from .lp import LpModel, LpResult

OPTIMAL = "Optimal"
FEASIBLE = "Feasible"
INFEASIBLE = "Infeasible"
LIMIT = "LimitReached"

PRUNE_TOL = 1e-9
INT_TOL = 1e-6


@dataclass(frozen=True)
class SolveLimits:
    time_limit_s: float = math.inf
    node_limit: int = 10**9
    gap_limit: float = 1e-9
    incumbent: Solution | None = None

    def __post_init__(self):
        if not (self.time_limit_s > 0 and self.node_limit > 0 and self.gap_limit > 0):
            raise ValueError("solve limits must all be positive")

    def with_incumbent(self, incumbent: Solution | None) -> "SolveLimits":
        return SolveLimits(self.time_limit_s, self.node_limit, self.gap_limit, incumbent)

    def to_dict(self) -> dict:
        return {"time_limit_s": None if math.isinf(self.time_limit_s) else self.time_limit_s,
                "node_limit": self.node_limit, "gap_limit": self.gap_limit}

    @classmethod
    def from_dict(cls, d: dict | None) -> "SolveLimits":
        d = d or {}
        t = d.get("time_limit_s")
        return cls(math.inf if t is None else float(t), int(d.get("node_limit", 10**9)),
                   float(d.get("gap_limit", 1e-9)))


EXHAUSTIVE = SolveLimits()


@dataclass
class BnbResult:
    status: str
    best: Solution | None
    incumbents: list = field(default_factory=list)
    nodes: int = 0
    dual_bound: float = math.inf

    def to_dict(self) -> dict:
        def sol(s):
            return {"assignment": s.bits, "objective": s.objective,
                    "found_at_s": s.found_at_s, "found_at_iter": s.found_at_iter}
        return {
            "status": self.status,
            "best": sol(self.best) if self.best is not None else None,
            "incumbents": [sol(s) for s in self.incumbents],
            "nodes": self.nodes,
            "dual_bound": self.dual_bound if math.isfinite(self.dual_bound) else None,
        }


def _fractionality(x: np.ndarray) -> np.ndarray:
    return np.minimum(x - np.floor(x), np.ceil(x) - x)


def solve_bnb(
    ilp: Ilp,
    limits: SolveLimits = EXHAUSTIVE,
    on_node: Callable[[np.ndarray, np.ndarray, LpResult], None] | None = None,
    model: LpModel | None = None,
) -> BnbResult:
    """Solve ``ilp`` to optimality or until a limit is hit.

    ``on_node`` is called with ``(lb, ub, lp_result)`` for every LP solved,
    which lets tests audit bound soundness node by node.
    """
    start = time.perf_counter()
    model = model or LpModel(ilp)
    n = ilp.n
    incumbents: list[Solution] = []
    best: Solution | None = None
    if limits.incumbent is not None:
        warm = evaluate(ilp, limits.incumbent.assignment)
        if not warm.feasible:
            raise ValueError("warm-start incumbent is infeasible for this ILP")
        best = warm.stamped(0.0, 0)
        incumbents.append(best)

    nodes = 0
    seq = 0
    heap: list = []
    interrupted = False
    pending_bound = math.inf  # bound of a node abandoned mid-dive by a limit

    def out_of_budget() -> bool:
        return nodes >= limits.node_limit or time.perf_counter() - start >= limits.time_limit_s

    def try_incumbent(x: np.ndarray) -> None:
        nonlocal best
        cand = evaluate(ilp, np.rint(x).astype(np.int8))
        if cand.feasible and (best is None or cand.objective < best.objective - PRUNE_TOL):
            best = cand.stamped(time.perf_counter() - start, nodes)
            incumbents.append(best)

    def dive(lb: np.ndarray, ub: np.ndarray, bound: float) -> None:
        nonlocal nodes, seq, interrupted, pending_bound
        while True:
            if out_of_budget():
                interrupted = True
                pending_bound = min(pending_bound, bound)
                return
            lp = model.solve(lb, ub)
            nodes += 1
            if on_node is not None:
                on_node(lb.copy(), ub.copy(), lp)
            if not lp.optimal:
                return
            if best is not None and lp.objective >= best.objective - PRUNE_TOL:
                return
            x = lp.values
            frac = _fractionality(x)
            if frac.max() <= INT_TOL:
                cand = np.rint(x)
                if evaluate(ilp, cand.astype(np.int8)).feasible:
                    try_incumbent(x)
                    return
                # rounding within tolerance broke feasibility: branch anyway
                free = np.flatnonzero(ub - lb > 0.5)
                if free.size == 0:
                    return
                j = int(free[np.argmax(frac[free])])
            else:
                j = int(np.argmax(frac))
            up_first = x[j] >= 0.5
            lb_up, ub_dn = lb.copy(), ub.copy()
            lb_up[j] = 1.0
            ub_dn[j] = 0.0
            if up_first:
                heapq.heappush(heap, (lp.objective, seq, lb, ub_dn))
                lb = lb_up
            else:
                heapq.heappush(heap, (lp.objective, seq, lb_up, ub))
                ub = ub_dn
            seq += 1
            bound = lp.objective

    gap_stop = False
    dive(np.zeros(n), np.ones(n), -math.inf)
    while heap and not interrupted:
        bound, _, lb, ub = heapq.heappop(heap)
        if best is not None:
            if bound >= best.objective - PRUNE_TOL:
                continue
            dual = bound
            if abs(best.objective - dual) / max(abs(best.objective), 1e-8) <= limits.gap_limit:
                heapq.heappush(heap, (bound, -1, lb, ub))
                gap_stop = True
                break
        dive(lb, ub, bound)

    open_bounds = [h[0] for h in heap]
    if best is not None:
        open_bounds = [b for b in open_bounds if b < best.objective - PRUNE_TOL]
    if interrupted:
        open_bounds.append(pending_bound)
    if best is None:
        status = LIMIT if interrupted else INFEASIBLE
        dual = min(open_bounds) if open_bounds else math.inf
        return BnbResult(status, None, incumbents, nodes, dual)
    dual = min([best.objective] + open_bounds)
    if not open_bounds or abs(best.objective - dual) <= 1e-6:
        status = OPTIMAL
    elif interrupted:
        status = LIMIT
    else:
        status = FEASIBLE if gap_stop else OPTIMAL
    return BnbResult(status, best, incumbents, nodes, dual)
