"""Seeded generators for the four benchmark families (MVC, MIS, SC, CA).

All randomness comes from :class:`cllns.rng.Rng`, so a ``GenSpec`` fully
determines the instance file byte for byte.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ilp import Ilp, evaluate, write_ilp
from .rng import Rng

FAMILIES = ("mvc", "mis", "sc", "ca")


def _check(cond: bool, msg: str) -> None:
    if not cond:
        raise ValueError(msg)


def _meta(family: str, seed: int, **params) -> dict:
    meta = {"family": family, "seed": str(seed)}
    meta.update({k: repr(v) if isinstance(v, float) else str(v) for k, v in params.items()})
    return meta


def _assert_feasible(ilp: Ilp, x) -> Ilp:
    if not evaluate(ilp, np.asarray(x, dtype=np.int8)).feasible:
        raise AssertionError(f"{ilp.name}: expected trivial solution is infeasible")
    return ilp


def ba_edges(n_nodes: int, attachment: int, rng: Rng) -> list[tuple[int, int]]:
    """Barabasi-Albert graph grown from an ``(attachment + 1)``-clique.

    Each new node links to ``attachment`` distinct existing nodes drawn with
    probability proportional to their current degree.
    """
    seed_size = attachment + 1
    edges = [(u, v) for u in range(seed_size) for v in range(u + 1, seed_size)]
    # each node appears once per incident edge; uniform draws from this list are degree-proportional
    repeated = [u for e in edges for u in e]
    for v in range(seed_size, n_nodes):
        targets: set[int] = set()
        while len(targets) < attachment:
            targets.add(repeated[rng.integers(len(repeated))])
        for u in sorted(targets):
            edges.append((u, v))
            repeated += [u, v]
    return edges


def ba_edge_count(n_nodes: int, attachment: int, seed_graph: str = "clique") -> int:
    """Closed-form edge count of a BA graph.

    ``seed_graph="star"`` counts the variant seeded with an ``attachment``-edge
    star (as in networkx), which is how the benchmark's published MVC sizes
    (65,100 rows for 1,000 nodes) come about with attachment 70.
    """
    if seed_graph == "clique":
        s = attachment + 1
        return s * (s - 1) // 2 + (n_nodes - s) * attachment
    if seed_graph == "star":
        return attachment + (n_nodes - attachment - 1) * attachment
    raise ValueError(seed_graph)


def gen_mvc(n_nodes: int, avg_degree: int, seed: int) -> Ilp:
    _check(isinstance(n_nodes, int) and isinstance(avg_degree, int), "n_nodes and avg_degree must be integers")
    _check(n_nodes > avg_degree >= 1, f"need n_nodes > avg_degree >= 1, got {n_nodes}, {avg_degree}")
    attachment = math.ceil(avg_degree / 2)
    _check(attachment + 1 <= n_nodes, "graph too small for the attachment parameter")
    edges = ba_edges(n_nodes, attachment, Rng(seed))
    rows = [([(u, 1.0), (v, 1.0)], 1.0, "ge") for u, v in edges]
    ilp = Ilp.from_rows(np.ones(n_nodes), rows, f"mvc-n{n_nodes}-d{avg_degree}-s{seed}",
                        _meta("mvc", seed, n_nodes=n_nodes, avg_degree=avg_degree, attachment=attachment))
    return _assert_feasible(ilp, np.ones(n_nodes))


def er_edges(n_nodes: int, p: float, rng: Rng) -> list[tuple[int, int]]:
    pairs = [(u, v) for u in range(n_nodes) for v in range(u + 1, n_nodes)]
    draws = rng.random(len(pairs)) if pairs else np.zeros(0)
    return [e for e, r in zip(pairs, draws) if r < p]


def gen_mis(n_nodes: int, avg_degree: float, seed: int) -> Ilp:
    _check(isinstance(n_nodes, int) and n_nodes >= 2, "n_nodes must be an integer >= 2")
    _check(0 < avg_degree <= n_nodes - 1, f"need 0 < avg_degree <= n_nodes - 1, got {avg_degree}")
    p = avg_degree / (n_nodes - 1)
    edges = er_edges(n_nodes, p, Rng(seed))
    rows = [([(u, 1.0), (v, 1.0)], 1.0) for u, v in edges]
    ilp = Ilp.from_rows(-np.ones(n_nodes), rows, f"mis-n{n_nodes}-d{avg_degree:g}-s{seed}",
                        _meta("mis", seed, n_nodes=n_nodes, avg_degree=float(avg_degree)))
    return _assert_feasible(ilp, np.zeros(n_nodes))


def gen_sc(n_vars: int, n_cons: int, density: float, seed: int) -> Ilp:
    _check(isinstance(n_vars, int) and n_vars >= 2, "n_vars must be an integer >= 2")
    _check(isinstance(n_cons, int) and n_cons >= 1, "n_cons must be a positive integer")
    _check(0 < density < 1, f"density must lie in (0, 1), got {density}")
    rng = Rng(seed)
    rows = []
    for _ in range(n_cons):
        count = max(2, rng.binomial(n_vars, density))
        sets = sorted(rng.sample(n_vars, count))
        rows.append(([(s, 1.0) for s in sets], 1.0, "ge"))
    ilp = Ilp.from_rows(np.ones(n_vars), rows, f"sc-v{n_vars}-c{n_cons}-p{density:g}-s{seed}",
                        _meta("sc", seed, n_vars=n_vars, n_cons=n_cons, density=float(density)))
    return _assert_feasible(ilp, np.ones(n_vars))


def gen_ca(n_items: int, n_bids: int, seed: int, bundle_size_mean: float = 3.0,
           price_noise: float = 0.2) -> Ilp:
    """Combinatorial auction with Poisson-sized bundles and size-proportional prices."""
    _check(isinstance(n_items, int) and n_items >= 2, "n_items must be an integer >= 2")
    _check(isinstance(n_bids, int) and n_bids >= 1, "n_bids must be a positive integer")
    _check(bundle_size_mean > 0, "bundle_size_mean must be positive")
    _check(0 <= price_noise < 1, "price_noise must lie in [0, 1)")
    rng = Rng(seed)
    prices = []
    item_bids: list[list[int]] = [[] for _ in range(n_items)]
    for i in range(n_bids):
        size = min(n_items, max(1, rng.poisson(bundle_size_mean)))
        for j in rng.sample(n_items, size):
            item_bids[j].append(i)
        prices.append(size * (1.0 + rng.uniform(-price_noise, price_noise)))
    rows = [([(i, 1.0) for i in bids], 1.0) for bids in item_bids]
    ilp = Ilp.from_rows(-np.asarray(prices), rows, f"ca-i{n_items}-b{n_bids}-s{seed}",
                        _meta("ca", seed, n_items=n_items, n_bids=n_bids,
                              bundle_size_mean=float(bundle_size_mean), price_noise=float(price_noise)))
    return _assert_feasible(ilp, np.zeros(n_bids))


@dataclass(frozen=True)
class GenSpec:
    family: str
    seed: int
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        _check(self.family in FAMILIES, f"unknown family {self.family!r}")
        _check(0 <= self.seed < 2**64, "seed must be a 64-bit unsigned integer")

    def to_dict(self) -> dict:
        return {"family": self.family, "seed": self.seed, "params": dict(self.params)}


def generate(spec: GenSpec) -> Ilp:
    p = spec.params
    if spec.family == "mvc":
        return gen_mvc(int(p["n_nodes"]), int(p["avg_degree"]), spec.seed)
    if spec.family == "mis":
        return gen_mis(int(p["n_nodes"]), p["avg_degree"], spec.seed)
    if spec.family == "sc":
        return gen_sc(int(p["n_vars"]), int(p["n_cons"]), float(p["density"]), spec.seed)
    return gen_ca(int(p["n_items"]), int(p["n_bids"]), spec.seed,
                  float(p.get("bundle_size_mean", 3.0)), float(p.get("price_noise", 0.2)))


def generate_dataset(specs: list[GenSpec], out_dir) -> list[Path]:
    """Write one instance file per spec plus ``manifest.json`` listing the specs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths, entries = [], []
    for spec in specs:
        ilp = generate(spec)
        path = out / f"{ilp.name}.json"
        write_ilp(ilp, path)
        paths.append(path)
        entries.append({"file": path.name, **spec.to_dict()})
    (out / "manifest.json").write_text(json.dumps({"instances": entries}, indent=2) + "\n")
    return paths


def read_manifest(path) -> list[tuple[Path, GenSpec]]:
    path = Path(path)
    d = json.loads(path.read_text())
    return [(path.parent / e["file"], GenSpec(e["family"], int(e["seed"]), e.get("params", {})))
            for e in d["instances"]]
