"""Anytime metrics over run logs, experiment orchestration and reports.

Events are ``(elapsed_s, iteration, objective)`` triples. Metrics treat the
primal bound as a right-continuous step function of time on either axis.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bnb import OPTIMAL, SolveLimits, solve_bnb
from .ilp import read_ilp
from .lns import RUN_COLUMNS, LnsParams, RunLog, make_heuristic, run_lns

log = logging.getLogger(__name__)

EPS = 1e-8
TIE_TOL = 1e-12
AXES = ("elapsed", "iteration")
METRIC_COLUMNS = ("instance", "method", "seed", "t", "primal_bound", "primal_gap", "primal_integral")
AGGREGATE_COLUMNS = ("method", "t", "mean_primal_gap", "mean_primal_integral", "survival_rate",
                     "best_performing_rate", "gap_to_virtual_best")


@dataclass
class MetricConfig:
    epsilon: float = EPS
    gap_threshold: float = 0.01
    grid: list = field(default_factory=lambda: [10.0, 20.0, 30.0])
    axis: str = "iteration"
    best_known: str = "oracle"

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if not 0 < self.gap_threshold < 1:
            raise ValueError("gap_threshold must lie in (0, 1)")
        if self.axis not in AXES:
            raise ValueError(f"axis must be one of {AXES}")
        if self.best_known not in ("oracle", "virtual-best"):
            raise ValueError("best_known must be 'oracle' or 'virtual-best'")
        if not self.grid or any(t <= 0 for t in self.grid):
            raise ValueError("grid points must be positive")


def _events(run) -> list:
    return run.events if isinstance(run, RunLog) else list(run)


def _key(axis: str) -> int:
    return 0 if axis == "elapsed" else 1


# -- metrics ----------------------------------------------------------------

def primal_gap(v: float | None, v_star: float, eps: float = EPS) -> float:
    """``|v - v*| / max(|v|, |v*|, eps)``; 1 when ``v`` is missing or has the opposite sign."""
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return 1.0
    if v * v_star < 0:
        return 1.0
    return abs(v - v_star) / max(abs(v), abs(v_star), eps)


def bound_at(run, t: float, axis: str = "iteration") -> float | None:
    """Best objective known at time ``t`` (the last event at or before ``t``)."""
    j = _key(axis)
    best = None
    for e in _events(run):
        if e[j] <= t:
            best = e[2]
        else:
            break
    return best


def primal_integral(run, v_star: float, q: float, axis: str = "iteration", eps: float = EPS) -> float:
    """Integral of the primal gap over ``[0, q]``; the gap is 1 before the first event."""
    if q <= 0:
        raise ValueError("q must be positive")
    j = _key(axis)
    total = 0.0
    prev_t, prev_gap = 0.0, 1.0
    for e in _events(run):
        t = e[j]
        if t >= q:
            break
        total += prev_gap * (t - prev_t)
        prev_t, prev_gap = t, primal_gap(e[2], v_star, eps)
    return total + prev_gap * (q - prev_t)


def survival_rate(logs: dict, v_star: dict, threshold: float, t: float, axis: str = "iteration",
                  eps: float = EPS) -> float:
    """Fraction of instances whose gap at ``t`` is strictly below ``threshold``."""
    kept = [k for k in logs if k in v_star and v_star[k] is not None]
    for k in logs:
        if k not in kept:
            warnings.warn(f"no best-known objective for {k!r}; excluded from survival rate")
    if not kept:
        return math.nan
    hits = sum(primal_gap(bound_at(logs[k], t, axis), v_star[k], eps) < threshold for k in kept)
    return hits / len(kept)


def best_performing_rate(logs_by_method: dict, v_star: dict, t: float, axis: str = "iteration",
                         eps: float = EPS) -> dict:
    """Per method, the fraction of instances where it attains the smallest gap (ties all count)."""
    methods = list(logs_by_method)
    if not methods:
        return {}
    instances = list(logs_by_method[methods[0]])
    credit = {m: 0 for m in methods}
    for inst in instances:
        gaps = {m: primal_gap(bound_at(logs_by_method[m][inst], t, axis), v_star[inst], eps) for m in methods}
        best = min(gaps.values())
        for m in methods:
            if gaps[m] <= best + TIE_TOL:
                credit[m] += 1
    return {m: credit[m] / len(instances) for m in methods}


def gap_to_virtual_best(logs_by_method: dict, t: float, axis: str = "iteration", eps: float = EPS) -> dict:
    """Mean gap of each method to the best bound any method reached by ``t``."""
    methods = list(logs_by_method)
    if not methods:
        return {}
    instances = list(logs_by_method[methods[0]])
    sums = {m: 0.0 for m in methods}
    count = 0
    for inst in instances:
        bounds = {m: bound_at(logs_by_method[m][inst], t, axis) for m in methods}
        found = [b for b in bounds.values() if b is not None]
        if not found:
            continue
        vb = min(found)
        count += 1
        for m in methods:
            sums[m] += primal_gap(bounds[m], vb, eps)
    return {m: (sums[m] / count if count else math.nan) for m in methods}


# -- experiments ------------------------------------------------------------

@dataclass
class MethodSpec:
    name: str
    method: str
    params: dict = field(default_factory=dict)
    weights: str | None = None


def _load_config(config: dict, base: Path) -> tuple:
    known = {"instances", "methods", "seeds", "metrics", "oracle"}
    unknown = set(config) - known
    if unknown:
        raise ValueError(f"unknown experiment keys: {sorted(unknown)}")
    inst = config["instances"]
    if isinstance(inst, str):
        path = (base / inst)
        if path.is_dir():
            path = path / "manifest.json"
        manifest = json.loads(path.read_text())
        files = [path.parent / e["file"] for e in manifest["instances"]]
    else:
        files = [base / f for f in inst]
    methods = [MethodSpec(m["name"], m.get("method", m["name"]), m.get("params", {}), m.get("weights"))
               for m in config["methods"]]
    names = [m.name for m in methods]
    if len(set(names)) != len(names):
        raise ValueError("method names must be unique")
    seeds = [int(s) for s in config.get("seeds", [0])]
    metric = MetricConfig(**config.get("metrics", {}))
    oracle = SolveLimits.from_dict(config.get("oracle", {"node_limit": 20000}))
    return files, methods, seeds, metric, oracle


def _run_cell(ilp, spec: MethodSpec, seed: int, weights_cache: dict):
    params = LnsParams.from_dict({**spec.params, "seed": seed})
    weights = None
    if spec.weights:
        weights = weights_cache[spec.weights]
    heuristic = make_heuristic(spec.method, params, weights)
    return run_lns(ilp, heuristic, params, instance=ilp.name, method=spec.name)


def compute_metrics(runs: list[RunLog], v_star: dict, metric: MetricConfig) -> list[tuple]:
    rows = []
    for run in sorted(runs, key=lambda r: (r.instance, r.method, r.seed)):
        vs = v_star[run.instance]
        for t in metric.grid:
            b = bound_at(run, t, metric.axis)
            rows.append((run.instance, run.method, run.seed, t, b,
                         primal_gap(b, vs, metric.epsilon),
                         primal_integral(run, vs, t, metric.axis, metric.epsilon)))
    return rows


def aggregate(runs: list[RunLog], v_star: dict, metric: MetricConfig) -> list[tuple]:
    """Per-method summaries at each grid point; an (instance, seed) pair is one unit."""
    by_method: dict = {}
    for r in runs:
        by_method.setdefault(r.method, {})[(r.instance, r.seed)] = r
    units = sorted(set.intersection(*(set(d) for d in by_method.values()))) if by_method else []
    by_method = {m: {u: d[u] for u in units} for m, d in sorted(by_method.items())}
    vs_units = {u: v_star[u[0]] for u in units}
    rows = []
    for t in metric.grid:
        best = best_performing_rate(by_method, vs_units, t, metric.axis, metric.epsilon)
        vb = gap_to_virtual_best(by_method, t, metric.axis, metric.epsilon)
        for m, d in by_method.items():
            gaps = [primal_gap(bound_at(d[u], t, metric.axis), vs_units[u], metric.epsilon) for u in units]
            ints = [primal_integral(d[u], vs_units[u], t, metric.axis, metric.epsilon) for u in units]
            surv = survival_rate(d, vs_units, metric.gap_threshold, t, metric.axis, metric.epsilon)
            rows.append((m, t, float(np.mean(gaps)), float(np.mean(ints)), surv, best[m], vb[m]))
    return rows


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def run_experiment(config: dict, out_dir, threads: int = 1, base_dir=".") -> Path:
    """Run every (instance, method, seed) cell and write the CSV artifacts to ``out_dir``."""
    from .gat import load_weights

    base = Path(base_dir)
    files, methods, seeds, metric, oracle = _load_config(config, base)
    out = Path(out_dir)
    (out / "runs").mkdir(parents=True, exist_ok=True)
    ilps = {}
    for f in files:
        ilp = read_ilp(f)
        ilps[ilp.name] = ilp
    weights_cache = {m.weights: load_weights(base / m.weights) for m in methods if m.weights}

    cells = [(name, spec, seed) for name in ilps for spec in methods for seed in seeds]

    def job(cell):
        name, spec, seed = cell
        try:
            return cell, _run_cell(ilps[name], spec, seed, weights_cache), None
        except Exception as exc:  # recorded per cell; the experiment goes on
            log.warning("%s/%s/%d failed: %s", name, spec.name, seed, exc)
            return cell, None, f"{type(exc).__name__}: {exc}"

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(job, cells))
    else:
        results = [job(c) for c in cells]

    runs, errors = [], []
    for (name, spec, seed), run, err in results:
        if err is not None:
            errors.append((name, spec.name, seed, err))
            continue
        runs.append(run)
        run.write_csv(out / "runs" / f"{name}__{spec.name}__s{seed}.csv")
    _write_csv(out / "errors.csv", ("instance", "method", "seed", "error"), errors)
    _write_csv(out / "runs.csv", RUN_COLUMNS,
               [row for r in sorted(runs, key=lambda r: (r.instance, r.method, r.seed)) for row in r.rows()])

    v_star, source = {}, {}
    for name, ilp in ilps.items():
        finals = [r.events[-1][2] for r in runs if r.instance == name and r.events]
        vb = min(finals) if finals else None
        v_star[name], source[name] = vb, "virtual-best"
        if metric.best_known == "oracle":
            res = solve_bnb(ilp, oracle)
            if res.status == OPTIMAL and res.best is not None:
                v_star[name], source[name] = res.best.objective, "oracle"
    _write_csv(out / "best_known.csv", ("instance", "v_star", "source"),
               [(k, v_star[k], source[k]) for k in sorted(v_star)])
    runs = [r for r in runs if v_star[r.instance] is not None]
    _write_csv(out / "metrics.csv", METRIC_COLUMNS, compute_metrics(runs, v_star, metric))
    _write_csv(out / "aggregate.csv", AGGREGATE_COLUMNS, aggregate(runs, v_star, metric))
    (out / "experiment.json").write_text(json.dumps(
        {"config": config, "threads": threads}, indent=2, sort_keys=True) + "\n")
    return out


# -- reporting --------------------------------------------------------------

def read_metrics(path) -> list[dict]:
    with open(path, newline="") as fh:
        text = fh.read()
    if not text.strip():
        return []
    reader = csv.DictReader(text.splitlines())
    if tuple(reader.fieldnames or ()) != METRIC_COLUMNS:
        raise ValueError(f"{path}: expected columns {','.join(METRIC_COLUMNS)}, got {reader.fieldnames}")
    rows = []
    for lineno, row in enumerate(reader, 2):
        try:
            rows.append({
                "instance": row["instance"], "method": row["method"], "seed": int(row["seed"]),
                "t": float(row["t"]),
                "primal_bound": float(row["primal_bound"]) if row["primal_bound"] else None,
                "primal_gap": float(row["primal_gap"]), "primal_integral": float(row["primal_integral"]),
            })
        except (TypeError, ValueError) as exc:
            raise ValueError(f"{path}:{lineno}: malformed row ({exc})") from exc
    return rows


def report(metrics_path, out_dir, threshold: float = 0.01) -> dict:
    """Write mean/std tables and ``x,y`` curve files; returns the summary rows by method."""
    rows = read_metrics(metrics_path)
    out = Path(out_dir)
    (out / "curves").mkdir(parents=True, exist_ok=True)
    header = ("method", "t", "runs", "primal_gap_mean", "primal_gap_std",
              "primal_integral_mean", "primal_integral_std")
    if not rows:
        warnings.warn(f"{metrics_path}: no metric rows; writing empty tables")
        _write_csv(out / "summary.csv", header, [])
        (out / "summary.md").write_text(_markdown(header, []))
        return {}
    times = sorted({r["t"] for r in rows})
    methods = sorted({r["method"] for r in rows})
    t_final = times[-1]
    summary = []
    for m in methods:
        sel = [r for r in rows if r["method"] == m and r["t"] == t_final]
        pg = np.array([r["primal_gap"] for r in sel])
        pi = np.array([r["primal_integral"] for r in sel])
        summary.append((m, t_final, len(sel), float(pg.mean()), float(pg.std()), float(pi.mean()), float(pi.std())))
    _write_csv(out / "summary.csv", header, summary)
    (out / "summary.md").write_text(_markdown(header, summary))

    gap = {(r["instance"], r["seed"], r["method"], r["t"]): r["primal_gap"] for r in rows}
    units = sorted({(r["instance"], r["seed"]) for r in rows})
    for m in methods:
        mean_gap, surv, best = [], [], []
        for t in times:
            mine = [gap[(i, s, m, t)] for i, s in units if (i, s, m, t) in gap]
            mean_gap.append(float(np.mean(mine)) if mine else math.nan)
            surv.append(float(np.mean([g < threshold for g in mine])) if mine else math.nan)
            credited = 0
            for i, s in units:
                if (i, s, m, t) not in gap:
                    continue
                others = [gap[(i, s, o, t)] for o in methods if (i, s, o, t) in gap]
                credited += gap[(i, s, m, t)] <= min(others) + TIE_TOL
            best.append(credited / len(mine) if mine else math.nan)
        for label, ys in (("gap", mean_gap), ("survival", surv), ("best_rate", best)):
            _write_csv(out / "curves" / f"{label}__{m}.csv", ("x", "y"), list(zip(times, ys)))
    return {row[0]: row for row in summary}


def _markdown(header, rows) -> str:
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    for r in rows:
        cells = [f"{v:.6g}" if isinstance(v, float) else str(v) for v in r]
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"
