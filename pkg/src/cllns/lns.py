"""Large neighborhood search over binary ILPs.

One iteration destroys (unfixes) ``k`` variables chosen by a heuristic,
re-solves the resulting sub-ILP warm-started from the incumbent and accepts
the result only if it is strictly better. Failed iterations grow ``k``.
"""
from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .bnb import SolveLimits, solve_bnb
from .features import WINDOW, featurize, pad_window, static_features
from .ilp import Action, Ilp, Solution, add_local_branching_constraint, build_sub_ilp, evaluate
from .lp import LpResult, SolverStall, solve_lp_relaxation
from .rng import Rng

log = logging.getLogger(__name__)

IMPROVE_TOL = 1e-9
SAMPLING_EPS = 1e-12
CLOCKS = ("wall", "iteration")
INIT_MODES = ("bnb", "constant")
RUN_COLUMNS = ("instance", "method", "seed", "elapsed_s", "iteration", "objective")


class InitFailure(RuntimeError):
    pass


class NoImprovement(RuntimeError):
    pass


@dataclass
class LnsParams:
    k0: int = 10
    gamma: float = 1.02
    beta: float = 0.5
    init_budget: SolveLimits = field(default_factory=lambda: SolveLimits(node_limit=1000))
    repair_budget: SolveLimits = field(default_factory=lambda: SolveLimits(node_limit=1000))
    lb_budget: SolveLimits = field(default_factory=lambda: SolveLimits(node_limit=2000))
    max_iterations: int | None = 100
    time_limit_s: float = math.inf
    seed: int = 0
    eta: float = 0.5
    clock: str = "wall"
    init: str = "bnb"

    def __post_init__(self):
        if self.k0 < 1:
            raise ValueError(f"k0 must be >= 1, got {self.k0}")
        if self.gamma < 1:
            raise ValueError(f"gamma must be >= 1, got {self.gamma}")
        if not 0 < self.beta <= 1:
            raise ValueError(f"beta must lie in (0, 1], got {self.beta}")
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.clock not in CLOCKS:
            raise ValueError(f"clock must be one of {CLOCKS}")
        if self.init not in INIT_MODES:
            raise ValueError(f"init must be one of {INIT_MODES}")
        if self.max_iterations is None and math.isinf(self.time_limit_s):
            raise ValueError("need an iteration cap or a time limit")
        if self.max_iterations is not None and self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")

    def to_dict(self) -> dict:
        return {
            "k0": self.k0, "gamma": self.gamma, "beta": self.beta,
            "init_budget": self.init_budget.to_dict(),
            "repair_budget": self.repair_budget.to_dict(),
            "lb_budget": self.lb_budget.to_dict(),
            "max_iterations": self.max_iterations,
            "time_limit_s": None if math.isinf(self.time_limit_s) else self.time_limit_s,
            "seed": self.seed, "eta": self.eta, "clock": self.clock, "init": self.init,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LnsParams":
        known = set(cls().to_dict())
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown LNS parameters: {sorted(unknown)}")
        kw = dict(d)
        for key in ("init_budget", "repair_budget", "lb_budget"):
            if key in kw:
                kw[key] = SolveLimits.from_dict(kw[key])
        if kw.get("time_limit_s", 0) is None:
            kw["time_limit_s"] = math.inf
        return cls(**kw)


def k_cap(beta: float, n: int) -> int:
    return max(1, math.floor(beta * n + 1e-9))


def adapt_k(k: int, improved: bool, gamma: float, beta: float, n: int) -> int:
    """Keep ``k`` after an improvement, otherwise grow it by ``gamma`` up to ``floor(beta n)``."""
    if improved:
        return k
    cap = k_cap(beta, n)
    grown = max(k, math.ceil(gamma * k - 1e-9))
    return min(grown, cap)


@dataclass
class LnsState:
    ilp: Ilp
    incumbent: Solution
    history: list = field(default_factory=list)
    t: int = 0
    k: int = 1
    k_cap: int = 1
    elapsed: float = 0.0
    change_counts: np.ndarray | None = None
    _root_lp: LpResult | None = None
    _static: tuple | None = None

    def __post_init__(self):
        if not self.history:
            self.history = [self.incumbent.assignment.copy()]
        if self.change_counts is None:
            self.change_counts = np.zeros(self.ilp.n, dtype=np.int64)

    @property
    def window(self) -> list:
        return pad_window(self.history)

    @property
    def root_lp(self) -> LpResult:
        if self._root_lp is None:
            self._root_lp = solve_lp_relaxation(self.ilp)
        return self._root_lp

    def features(self):
        if self._static is None:
            self._static = static_features(self.ilp, self.root_lp)
        return featurize(self, self.root_lp, self._static)

    def accept(self, new: Solution) -> None:
        old = self.incumbent.assignment
        self.change_counts += (new.assignment != old)
        self.incumbent = new
        self.history = [new.assignment.copy()] + self.history[: WINDOW - 1]


@dataclass
class RunLog:
    instance: str
    method: str
    seed: int
    events: list = field(default_factory=list)
    status: str = ""
    best: Solution | None = None

    def add(self, elapsed_s: float, iteration: int, objective: float) -> None:
        if self.events:
            last = self.events[-1]
            if not objective < last[2]:
                raise AssertionError("run log objectives must strictly decrease")
            elapsed_s = max(elapsed_s, last[0])
        self.events.append((float(elapsed_s), int(iteration), float(objective)))

    @property
    def objectives(self) -> list:
        return [e[2] for e in self.events]

    def rows(self) -> list:
        return [(self.instance, self.method, self.seed, repr(e[0]), e[1], repr(e[2])) for e in self.events]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(RUN_COLUMNS)
            w.writerows(self.rows())


def read_run_csv(path) -> list[RunLog]:
    """Group rows of an events CSV back into RunLogs (one per instance/method/seed)."""
    logs: dict = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != RUN_COLUMNS:
            raise ValueError(f"{path}: expected columns {','.join(RUN_COLUMNS)}")
        for row in reader:
            key = (row["instance"], row["method"], int(row["seed"]))
            if key not in logs:
                logs[key] = RunLog(*key)
            logs[key].events.append((float(row["elapsed_s"]), int(row["iteration"]), float(row["objective"])))
    return list(logs.values())


# -- initial solution and local branching -----------------------------------

def initial_solution(ilp: Ilp, init_budget: SolveLimits, mode: str = "bnb") -> Solution:
    """First incumbent found by branch-and-bound (not necessarily its best).

    ``mode="constant"`` instead takes the better feasible point among all-zeros
    and all-ones, falling back to branch-and-bound when neither is feasible.
    Small instances often have an integral root LP, so the solver's first
    incumbent is already optimal and leaves the search nothing to do.
    """
    if mode == "constant":
        cands = [evaluate(ilp, np.full(ilp.n, v, dtype=np.int8)) for v in (0, 1)]
        cands = [c for c in cands if c.feasible]
        if cands:
            return min(cands, key=lambda c: c.objective).stamped(0.0, 0)
    elif mode != "bnb":
        raise ValueError(f"unknown init mode {mode!r}")
    res = solve_bnb(ilp, init_budget.with_incumbent(None))
    if not res.incumbents:
        raise InitFailure(f"{ilp.name}: no feasible solution within the initial budget ({res.status})")
    return res.incumbents[0]


def local_branching_step(ilp: Ilp, incumbent: Solution, k: int, budget: SolveLimits):
    """Solve the ILP inside the radius-``k`` Hamming ball around ``incumbent``.

    Returns ``(action, result)`` where the action marks the variables that
    differ between the best solution found and the incumbent.
    """
    lb_ilp = add_local_branching_constraint(ilp, incumbent, k)
    res = solve_bnb(lb_ilp, budget.with_incumbent(incumbent))
    if res.best is None or not res.best.objective < incumbent.objective - IMPROVE_TOL:
        raise NoImprovement(f"no improving solution within radius {k} ({res.status})")
    mask = res.best.assignment != incumbent.assignment
    return Action(mask), res


# -- destroy heuristics -----------------------------------------------------

def _check_k(k: int, n: int) -> None:
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")


def _top_k(scores: np.ndarray, k: int) -> Action:
    order = np.argsort(-np.asarray(scores, dtype=np.float64), kind="stable")
    return Action.from_indices(len(scores), order[:k])


def destroy_random(state: LnsState, k: int, rng: Rng) -> Action:
    n = state.ilp.n
    _check_k(k, n)
    return Action.from_indices(n, rng.sample(n, k))


def destroy_graph_bfs(state: LnsState, k: int, rng: Rng) -> Action:
    """First ``k`` variables expanded by BFS over the variable-constraint graph."""
    ilp = state.ilp
    n = ilp.n
    _check_k(k, n)
    var_rows = ilp.var_rows
    seen_var = np.zeros(n, dtype=bool)
    seen_con = np.zeros(ilp.m, dtype=bool)
    order: list[int] = []
    while len(order) < k:
        unvisited = np.flatnonzero(~seen_var)
        start = int(unvisited[rng.integers(unvisited.size)])
        seen_var[start] = True
        frontier = [start]
        while frontier and len(order) < k:
            nxt = []
            for v in frontier:
                order.append(v)
                if len(order) == k:
                    break
                for i in var_rows[v]:
                    if seen_con[i]:
                        continue
                    seen_con[i] = True
                    for u in ilp.row_indices[i]:
                        if not seen_var[u]:
                            seen_var[u] = True
                            nxt.append(int(u))
            frontier = nxt
    return Action.from_indices(n, order)


def destroy_local_branching(state: LnsState, k: int, budget: SolveLimits) -> Action:
    _check_k(k, state.ilp.n)
    action, _ = local_branching_step(state.ilp, state.incumbent, k, budget)
    return action


def destroy_lb_relax(state: LnsState, k: int) -> Action:
    """Rank variables by how far the local-branching LP moves them from the incumbent."""
    ilp = state.ilp
    _check_k(k, ilp.n)
    lp = solve_lp_relaxation(add_local_branching_constraint(ilp, state.incumbent, k))
    if not lp.optimal:
        raise RuntimeError(f"local branching LP is {lp.status}; the incumbent should be feasible")
    return _top_k(np.abs(lp.values - state.incumbent.assignment), k)


def destroy_policy_greedy(scores, k: int) -> Action:
    scores = np.asarray(scores)
    _check_k(k, scores.size)
    return _top_k(scores, k)


def destroy_policy_sampling(scores, k: int, eta: float, rng: Rng) -> Action:
    """Draw ``k`` variables without replacement with probability proportional to ``score**eta``."""
    scores = np.asarray(scores, dtype=np.float64)
    n = scores.size
    _check_k(k, n)
    if eta <= 0:
        raise ValueError("eta must be positive")
    w = np.maximum(np.power(np.clip(scores, 0.0, None), eta), SAMPLING_EPS)
    chosen = np.zeros(n, dtype=bool)
    for _ in range(k):
        cum = np.cumsum(np.where(chosen, 0.0, w))
        u = rng.random() * cum[-1]
        j = int(np.searchsorted(cum, u, side="right"))
        if j >= n or chosen[j]:  # rounding at the top end
            j = int(np.flatnonzero(~chosen)[-1])
        chosen[j] = True
    return Action(chosen)


class Heuristic:
    name = "base"

    def select(self, state: LnsState, k: int, rng: Rng) -> Action:
        raise NotImplementedError


class RandomDestroy(Heuristic):
    name = "random"

    def select(self, state, k, rng):
        return destroy_random(state, k, rng)


class GraphDestroy(Heuristic):
    name = "graph"

    def select(self, state, k, rng):
        return destroy_graph_bfs(state, k, rng)


class LocalBranchingDestroy(Heuristic):
    name = "lb"

    def __init__(self, budget: SolveLimits):
        self.budget = budget

    def select(self, state, k, rng):
        return destroy_local_branching(state, k, self.budget)


class LbRelaxDestroy(Heuristic):
    name = "lb_relax"

    def select(self, state, k, rng):
        return destroy_lb_relax(state, k)


class PolicyDestroy(Heuristic):
    """Learned scores; greedy until it repeats itself at the size cap, then sampling."""

    name = "policy"

    def __init__(self, weights, eta: float = 0.5, mode: str = "auto"):
        if mode not in ("auto", "greedy", "sampling"):
            raise ValueError(f"unknown policy mode {mode!r}")
        self.weights = weights
        self.eta = eta
        self.mode = mode
        self.sampling = mode == "sampling"
        self._last_greedy: Action | None = None

    def scores(self, state: LnsState) -> np.ndarray:
        from .gat import forward
        return forward(self.weights, state.features())

    def select(self, state, k, rng):
        scores = self.scores(state)
        if not self.sampling:
            action = destroy_policy_greedy(scores, k)
            if (self.mode == "auto" and k >= state.k_cap
                    and self._last_greedy is not None and action == self._last_greedy):
                self.sampling = True
                log.debug("policy switches to sampling at iteration %d", state.t)
            else:
                self._last_greedy = action
                return action
        return destroy_policy_sampling(scores, k, self.eta, rng)


def make_heuristic(method: str, params: LnsParams, weights=None) -> Heuristic:
    if method == "random":
        return RandomDestroy()
    if method == "graph":
        return GraphDestroy()
    if method == "lb":
        return LocalBranchingDestroy(params.lb_budget)
    if method == "lb_relax":
        return LbRelaxDestroy()
    if method in ("policy", "policy_greedy", "policy_sampling"):
        if weights is None:
            raise ValueError("the policy heuristic needs model weights")
        mode = {"policy": "auto", "policy_greedy": "greedy", "policy_sampling": "sampling"}[method]
        h = PolicyDestroy(weights, params.eta, mode)
        h.name = method
        return h
    raise ValueError(f"unknown method {method!r}")


# -- main loop --------------------------------------------------------------

def run_lns(ilp: Ilp, heuristic: Heuristic, params: LnsParams, instance: str | None = None,
            method: str | None = None) -> RunLog:
    n = ilp.n
    if params.k0 > n:
        raise ValueError(f"k0={params.k0} exceeds the number of variables {n}")
    start = time.perf_counter()
    wall = params.clock == "wall"

    def now(iteration: int) -> float:
        return time.perf_counter() - start if wall else float(iteration)

    run = RunLog(instance or ilp.name, method or heuristic.name, params.seed)
    incumbent = initial_solution(ilp, params.init_budget, params.init)
    cap = k_cap(params.beta, n)
    state = LnsState(ilp, incumbent, k=min(params.k0, cap), k_cap=cap)
    run.add(now(0), 0, incumbent.objective)
    rng = Rng(params.seed)
    run.status = "IterationLimit"

    t = 0
    while params.max_iterations is None or t < params.max_iterations:
        if wall and now(t) >= params.time_limit_s:
            run.status = "TimeLimit"
            break
        t += 1
        state.t = t
        improved = False
        try:
            action = heuristic.select(state, state.k, rng)
            sub = build_sub_ilp(ilp, state.incumbent, action)
            res = solve_bnb(sub, params.repair_budget.with_incumbent(state.incumbent))
            if res.best is not None and res.best.objective < state.incumbent.objective - IMPROVE_TOL:
                state.accept(res.best)
                improved = True
        except NoImprovement:
            pass
        except SolverStall as exc:
            log.warning("%s iteration %d: solver stalled (%s); skipping", run.instance, t, exc)
        if improved:
            run.add(now(t), t, state.incumbent.objective)
        state.k = adapt_k(state.k, improved, params.gamma, params.beta, n)
        state.elapsed = now(t)
    run.best = state.incumbent
    return run


__all__ = [
    "InitFailure", "NoImprovement", "LnsParams", "LnsState", "RunLog", "RUN_COLUMNS",
    "adapt_k", "k_cap", "initial_solution", "local_branching_step", "destroy_random",
    "destroy_graph_bfs", "destroy_local_branching", "destroy_lb_relax", "destroy_policy_greedy",
    "destroy_policy_sampling", "Heuristic", "RandomDestroy", "GraphDestroy",
    "LocalBranchingDestroy", "LbRelaxDestroy", "PolicyDestroy", "make_heuristic", "run_lns",
    "read_run_csv",
]
