"""Expert-trajectory collection, sample mining and policy training.

Collection follows local branching at a fixed radius. At each state the
solver's improving incumbents become positive destroy sets. Negatives are
perturbations of the expert's destroy set whose optimal repair barely
improves the incumbent.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import zlib
from dataclasses import dataclass, field

import numpy as np

from .bnb import OPTIMAL, BnbResult, SolveLimits, solve_bnb
from .features import BipartiteFeatures
from .gat import GatWeights, backward, forward, init_weights
from .ilp import Action, Ilp, Solution, build_sub_ilp
from .lns import IMPROVE_TOL, LnsState, NoImprovement, initial_solution, local_branching_step
from .losses import imitation_bce, info_nce
from .lp import SolverStall
from .rng import Rng, derive_seed

log = logging.getLogger(__name__)

LOSS_MODES = ("contrastive", "imitation")
HISTORY_COLUMNS = ("epoch", "mean_loss", "val_pos_minus_neg_logit")
_THRESH_TOL = 1e-9


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    alpha_p: float = 0.5
    u_p: int = 10
    alpha_n: float = 0.05
    kappa: int = 9
    tau: float = 0.07
    lr: float = 1e-3
    batch: int = 32
    epochs: int = 30
    seed: int = 0
    # collection
    k0: int = 3
    gamma: float = 1.0
    init: str = "constant"
    init_budget: SolveLimits = field(default_factory=lambda: SolveLimits(node_limit=1000))
    expert_budget: SolveLimits = field(default_factory=lambda: SolveLimits(node_limit=20000))
    negative_budget: SolveLimits = field(default_factory=lambda: SolveLimits(node_limit=2000))
    max_states: int = 100
    shuffle: bool = True

    def __post_init__(self):
        if not 0 < self.alpha_p <= 1:
            raise ValueError("alpha_p must lie in (0, 1]")
        if not 0 <= self.alpha_n < 1:
            raise ValueError("alpha_n must lie in [0, 1)")
        if self.kappa < 1 or self.u_p < 1:
            raise ValueError("kappa and u_p must be >= 1")
        if self.tau <= 0 or self.lr <= 0:
            raise ValueError("tau and lr must be positive")
        if self.batch < 1 or self.epochs < 0 or self.k0 < 1:
            raise ValueError("batch and k0 must be >= 1, epochs >= 0")
        if self.gamma < 1:
            raise ValueError("gamma must be >= 1")

    def to_dict(self) -> dict:
        d = {}
        for key in self.__dataclass_fields__:
            v = getattr(self, key)
            d[key] = v.to_dict() if isinstance(v, SolveLimits) else v
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown training parameters: {sorted(unknown)}")
        kw = dict(d)
        for key in ("init_budget", "expert_budget", "negative_budget"):
            if key in kw:
                kw[key] = SolveLimits.from_dict(kw[key])
        return cls(**kw)


@dataclass
class TrainExample:
    features: BipartiteFeatures
    positives: list
    negatives: list
    instance: str = ""
    t: int = 0
    incumbent: str = ""
    incumbent_objective: float = 0.0
    best_improvement: float = 0.0

    def __post_init__(self):
        n = self.features.n
        for a in list(self.positives) + list(self.negatives):
            if a.mask.shape != (n,):
                raise ValueError("action length does not match the features")

    def to_dict(self) -> dict:
        return {
            "instance": self.instance, "t": self.t, "incumbent": self.incumbent,
            "incumbent_objective": self.incumbent_objective,
            "best_improvement": self.best_improvement,
            "positives": [a.indices.tolist() for a in self.positives],
            "negatives": [a.indices.tolist() for a in self.negatives],
            "features": self.features.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainExample":
        feats = BipartiteFeatures.from_dict(d["features"])
        n = feats.n
        return cls(feats, [Action.from_indices(n, ix) for ix in d["positives"]],
                   [Action.from_indices(n, ix) for ix in d["negatives"]], d.get("instance", ""),
                   int(d.get("t", 0)), d.get("incumbent", ""), float(d.get("incumbent_objective", 0.0)),
                   float(d.get("best_improvement", 0.0)))


def write_dataset(examples: list[TrainExample], path) -> None:
    with open(path, "w") as fh:
        for ex in examples:
            fh.write(json.dumps(ex.to_dict(), sort_keys=True) + "\n")


def read_dataset(path) -> list[TrainExample]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(TrainExample.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: bad training example ({exc})") from exc
    return out


# -- sample mining ----------------------------------------------------------

def _dedupe(actions: list) -> list:
    seen, out = set(), []
    for a in actions:
        if a not in seen:
            seen.add(a)
            out.append(a)
    return out


def mine_positives(res: BnbResult, x_t: Solution, alpha_p: float, u_p: int) -> list[Action]:
    """Diff masks of the solver's incumbents that reach ``alpha_p`` of the best improvement."""
    improving = [(x_t.objective - s.objective, i, s) for i, s in enumerate(res.incumbents)
                 if s.objective < x_t.objective - IMPROVE_TOL]
    if not improving:
        return []
    best = max(imp for imp, _, _ in improving)
    kept = sorted((e for e in improving if e[0] >= alpha_p * best - _THRESH_TOL), key=lambda e: (-e[0], e[1]))
    masks = _dedupe([Action(s.assignment != x_t.assignment) for _, _, s in kept])
    return masks[:u_p]


def repair_improvement(ilp: Ilp, incumbent: Solution, action: Action, budget: SolveLimits):
    """Objective gain of re-solving ``action`` around ``incumbent``, or None if not proven optimal."""
    res = solve_bnb(build_sub_ilp(ilp, incumbent, action), budget.with_incumbent(incumbent))
    if res.status != OPTIMAL:
        return None
    return incumbent.objective - res.best.objective


def mine_negatives(state: LnsState, x_star_action: Action, best_improvement: float, cfg: TrainConfig,
                   rng: Rng, n_positives: int = 1, positives=()) -> list[Action]:
    """Perturb the expert's destroy set until ``kappa * n_positives`` weak sets are found.

    The perturbation rate starts at 5% of the set and grows in 5% steps. A
    candidate counts as negative only when its repair is proven optimal and
    gains at most ``alpha_n`` of the best improvement.
    """
    if x_star_action.size < 1 or best_improvement <= 0:
        raise ValueError("need a non-empty expert action with positive improvement")
    ilp, inc = state.ilp, state.incumbent
    selected = x_star_action.indices
    outside = np.flatnonzero(~x_star_action.mask)
    if outside.size == 0:
        log.warning("%s t=%d: expert action covers every variable; no negatives", ilp.name, state.t)
        return []
    target = cfg.kappa * n_positives
    limit = cfg.alpha_n * best_improvement + _THRESH_TOL
    banned = set(positives)
    negatives: list[Action] = []
    seen: dict = {}
    for pct in range(5, 101, 5):
        swaps = min(max(1, (pct * selected.size + 50) // 100), selected.size, outside.size)
        for _ in range(target):
            drop = selected[rng.sample(selected.size, swaps)]
            add = outside[rng.sample(outside.size, swaps)]
            mask = x_star_action.mask.copy()
            mask[drop] = False
            mask[add] = True
            cand = Action(mask)
            if cand in seen:
                continue
            try:
                imp = repair_improvement(ilp, inc, cand, cfg.negative_budget)
            except SolverStall:
                imp = None
            seen[cand] = imp
            if imp is None or imp > limit:
                continue
            if cand in banned:
                log.warning("%s t=%d: negative collides with a positive; dropped", ilp.name, state.t)
                continue
            negatives.append(cand)
            if len(negatives) == target:
                return negatives
    return negatives


def collect_trajectory(ilp: Ilp, cfg: TrainConfig, instance: str | None = None) -> list[TrainExample]:
    """Follow local branching at radius ``k0`` until it stops improving."""
    name = instance or ilp.name
    inc = initial_solution(ilp, cfg.init_budget, cfg.init)
    k = min(cfg.k0, ilp.n)
    state = LnsState(ilp, inc, k=k, k_cap=ilp.n)
    rng = Rng(derive_seed(cfg.seed, zlib.crc32(name.encode())))
    examples = []
    for t in range(cfg.max_states):
        state.t = t
        x_t = state.incumbent
        try:
            action, res = local_branching_step(ilp, x_t, state.k, cfg.expert_budget)
        except NoImprovement:
            break
        best_imp = x_t.objective - res.best.objective
        positives = mine_positives(res, x_t, cfg.alpha_p, cfg.u_p)
        negatives = mine_negatives(state, action, best_imp, cfg, rng, len(positives), positives)
        if not positives or not negatives:
            log.info("%s t=%d: dropped state (%d positives, %d negatives)", name, t, len(positives), len(negatives))
        else:
            examples.append(TrainExample(state.features(), positives, negatives, name, t, x_t.bits,
                                         x_t.objective, best_imp))
        state.accept(res.best)
        if cfg.gamma > 1:
            state.k = min(ilp.n, max(state.k, math.ceil(cfg.gamma * state.k - 1e-9)))
    return examples


# -- training ---------------------------------------------------------------

class Adam:
    def __init__(self, params: dict, lr: float, b1: float = 0.9, b2: float = 0.999, eps: float = 1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = {k: np.zeros(v.shape) for k, v in params.items()}
        self.v = {k: np.zeros(v.shape) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k in sorted(params):
            g = grads[k]
            self.m[k] = self.b1 * self.m[k] + (1.0 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1.0 - self.b2) * g * g
            upd = self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)
            params[k] = (params[k] - upd).astype(params[k].dtype)


def _mask_matrix(actions, n):
    return np.stack([a.mask for a in actions]).astype(np.float64) if actions else np.zeros((0, n))


def example_loss(scores, ex: TrainExample, loss_mode: str, tau: float):
    if loss_mode == "contrastive":
        return info_nce(scores, ex.positives, ex.negatives, tau)
    if loss_mode == "imitation":
        return imitation_bce(scores, ex.positives)
    raise ValueError(f"unknown loss mode {loss_mode!r}")


def pos_minus_neg_logit(weights: GatWeights, examples: list[TrainExample], tau: float) -> float:
    """Mean over examples of ``mean(a.scores) - mean(a'.scores)`` for positives vs negatives, over tau."""
    if not examples:
        return math.nan
    diffs = []
    for ex in examples:
        s = forward(weights, ex.features)
        pos = _mask_matrix(ex.positives, s.size) @ s
        neg = _mask_matrix(ex.negatives, s.size) @ s
        if pos.size and neg.size:
            diffs.append((pos.mean() - neg.mean()) / tau)
    return float(np.mean(diffs)) if diffs else math.nan


def train(dataset: list[TrainExample], cfg: TrainConfig, loss_mode: str = "contrastive",
          val: list[TrainExample] | None = None, weights: GatWeights | None = None):
    """Adam over mini-batches; returns ``(weights, history)``.

    Each history row is ``{"epoch", "mean_loss", "val_pos_minus_neg_logit"}``.
    Batch order comes from a per-epoch seeded permutation (or dataset order
    when ``cfg.shuffle`` is off).
    """
    if not dataset:
        raise ValueError("training dataset is empty")
    if loss_mode not in LOSS_MODES:
        raise ValueError(f"unknown loss mode {loss_mode!r}")
    w = weights.copy() if weights is not None else init_weights(cfg.seed)
    if cfg.epochs == 0:
        return w, []
    opt = Adam(w.params, cfg.lr)
    history = []
    n_ex = len(dataset)
    for epoch in range(1, cfg.epochs + 1):
        order = Rng(derive_seed(cfg.seed, epoch)).permutation(n_ex) if cfg.shuffle else list(range(n_ex))
        total = 0.0
        for lo in range(0, n_ex, cfg.batch):
            idx = order[lo:lo + cfg.batch]
            grads = w.zeros_like()
            for i in idx:
                ex = dataset[i]
                scores, cache = forward(w, ex.features, return_cache=True)
                loss, dscores = example_loss(scores, ex, loss_mode, cfg.tau)
                if not math.isfinite(loss):
                    raise TrainingError(f"non-finite loss at epoch {epoch} on example {i} "
                                        f"({ex.instance} t={ex.t})")
                total += loss
                for k, g in backward(w, cache, dscores).items():
                    grads[k] += g
            for k in grads:
                grads[k] /= len(idx)
            opt.step(w.params, grads)
        row = {"epoch": epoch, "mean_loss": total / n_ex,
               "val_pos_minus_neg_logit": pos_minus_neg_logit(w, val, cfg.tau) if val else math.nan}
        log.info("epoch %d loss %.6f val %.4f", epoch, row["mean_loss"], row["val_pos_minus_neg_logit"])
        history.append(row)
    return w, history


def write_history(history: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(HISTORY_COLUMNS)
        for row in history:
            wr.writerow([row["epoch"], repr(row["mean_loss"]), repr(row["val_pos_minus_neg_logit"])])
