"""Command-line entry point: ``cllns <stage> ...``.

Stages hand off through files: instances -> data.jsonl -> model.bin ->
runs.csv/metrics.csv -> report tables. Every invocation prints its resolved
configuration as JSON and writes the same JSON next to its main output.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .bnb import SolveLimits, solve_bnb
from .generators import FAMILIES, GenSpec, generate_dataset, read_manifest
from .ilp import read_ilp, write_solution

log = logging.getLogger("cllns")


class DomainError(Exception):
    pass


def _sidecar(path: Path) -> Path:
    if path.suffix and not path.is_dir():
        return path.with_name(path.name + ".config.json")
    return path / "config.json"


def _echo(config: dict, out: Path | None) -> None:
    text = json.dumps(config, indent=2, sort_keys=True)
    print(text)
    if out is not None:
        side = _sidecar(out)
        side.parent.mkdir(parents=True, exist_ok=True)
        side.write_text(text + "\n")


def _load_json(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DomainError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc


# -- subcommands ------------------------------------------------------------

def cmd_gen(args) -> int:
    fam = args.family
    if fam == "mvc":
        params = {"n_nodes": args.nodes, "avg_degree": int(args.degree)}
    elif fam == "mis":
        params = {"n_nodes": args.nodes, "avg_degree": float(args.degree)}
    elif fam == "sc":
        params = {"n_vars": args.vars, "n_cons": args.cons, "density": args.density}
    else:
        params = {"n_items": args.items, "n_bids": args.bids}
    specs = [GenSpec(fam, args.seed + i, params) for i in range(args.count)]
    out = Path(args.out)
    _echo({"command": "gen", "family": fam, "params": params, "count": args.count,
           "seed": args.seed, "out": str(out)}, out)
    paths = generate_dataset(specs, out)
    log.info("wrote %d instances to %s", len(paths), out)
    return 0


def cmd_solve(args) -> int:
    ilp = read_ilp(args.instance)
    limits = SolveLimits(args.time_limit if args.time_limit is not None else math.inf,
                         args.node_limit, args.gap)
    out = Path(args.out) if args.out else None
    _echo({"command": "solve", "instance": args.instance, "limits": limits.to_dict(),
           "out": args.out}, out)
    res = solve_bnb(ilp, limits)
    obj = res.best.objective if res.best is not None else None
    print(f"status {res.status}")
    print(f"objective {obj!r}" if obj is not None else "objective none")
    print(f"nodes {res.nodes}")
    if out is not None and res.best is not None:
        write_solution(res.best, out)
    return 0


def cmd_lns(args) -> int:
    from .gat import load_weights
    from .lns import LnsParams, make_heuristic, run_lns

    ilp = read_ilp(args.instance)
    p = _load_json(args.params)
    p.setdefault("seed", args.seed)
    if args.iterations is not None:
        p["max_iterations"] = args.iterations
    params = LnsParams.from_dict(p)
    weights = load_weights(args.weights) if args.weights else None
    out = Path(args.out)
    _echo({"command": "lns", "instance": args.instance, "method": args.method,
           "weights": args.weights, "params": params.to_dict(), "out": str(out)}, out)
    run = run_lns(ilp, make_heuristic(args.method, params, weights), params, method=args.method)
    out.parent.mkdir(parents=True, exist_ok=True)
    run.write_csv(out)
    print(f"best {run.events[-1][2]!r} after {len(run.events) - 1} improvements")
    return 0


def cmd_collect(args) -> int:
    from .trainer import TrainConfig, collect_trajectory, write_dataset

    cfg_d = _load_json(args.config)
    cfg_d.setdefault("seed", args.seed)
    cfg = TrainConfig.from_dict(cfg_d)
    src = Path(args.instances)
    files = [p for p, _ in read_manifest(src / "manifest.json")] if (src / "manifest.json").exists() \
        else sorted(p for p in src.glob("*.json") if p.name not in ("manifest.json", "config.json"))
    out = Path(args.out)
    _echo({"command": "collect", "instances": [str(f) for f in files], "config": cfg.to_dict(),
           "out": str(out)}, out)

    def job(path):
        return collect_trajectory(read_ilp(path), cfg)

    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            parts = list(pool.map(job, files))
    else:
        parts = [job(f) for f in files]
    examples = [ex for part in parts for ex in part]
    out.parent.mkdir(parents=True, exist_ok=True)
    write_dataset(examples, out)
    print(f"examples {len(examples)} from {len(files)} instances")
    return 0


def cmd_train(args) -> int:
    from .gat import save_weights
    from .trainer import TrainConfig, read_dataset, train, write_history

    cfg_d = _load_json(args.config)
    cfg_d.setdefault("seed", args.seed)
    if args.epochs is not None:
        cfg_d["epochs"] = args.epochs
    cfg = TrainConfig.from_dict(cfg_d)
    mode = {"cl": "contrastive", "il": "imitation"}[args.loss]
    out = Path(args.out)
    history_path = Path(args.history) if args.history else out.with_name(out.stem + ".history.csv")
    _echo({"command": "train", "data": args.data, "val": args.val, "loss": mode,
           "config": cfg.to_dict(), "out": str(out), "history": str(history_path)}, out)
    data = read_dataset(args.data)
    if not data:
        raise DomainError(f"{args.data}: no training examples")
    val = read_dataset(args.val) if args.val else None
    weights, history = train(data, cfg, mode, val)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_weights(weights, out)
    write_history(history, history_path)
    if history:
        print(f"final mean loss {history[-1]['mean_loss']!r}")
    return 0


def cmd_eval(args) -> int:
    from .bench import run_experiment

    cfg_path = Path(args.config)
    config = _load_json(args.config)
    if args.seeds:
        config["seeds"] = args.seeds
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _echo({"command": "eval", "experiment": config, "threads": args.threads, "out": str(out)}, out)
    run_experiment(config, out, args.threads, base_dir=cfg_path.parent)
    print(f"wrote {out / 'metrics.csv'}")
    return 0


def cmd_report(args) -> int:
    from .bench import report

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _echo({"command": "report", "metrics": args.metrics, "threshold": args.threshold, "out": str(out)}, out)
    summary = report(args.metrics, out, args.threshold)
    for row in summary.values():
        print(f"{row[0]}: gap {row[3]:.4g} +- {row[4]:.4g}, integral {row[5]:.4g} +- {row[6]:.4g}")
    return 0


# -- parser -----------------------------------------------------------------

def _env_seed() -> int:
    raw = os.environ.get("CLLNS_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise SystemExit(f"CLLNS_SEED must be an integer, got {raw!r}")


def build_parser() -> argparse.ArgumentParser:
    # global flags may appear before or after the subcommand
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master seed (env CLLNS_SEED)")
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="worker threads")
    common.add_argument("--log-level", default=argparse.SUPPRESS,
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    parser = argparse.ArgumentParser(prog="cllns", description="Learned large neighborhood search for binary ILPs.")
    parser.add_argument("--seed", type=int, default=None, help="master seed (env CLLNS_SEED)")
    parser.add_argument("--threads", type=int, default=1, help="worker threads")
    parser.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    p = sub.add_parser("gen", parents=[common], help="generate benchmark instances")
    p.add_argument("--family", required=True, choices=FAMILIES)
    p.add_argument("--nodes", type=int, default=30, help="graph size (mvc, mis)")
    p.add_argument("--degree", type=float, default=4, help="average degree (mvc, mis)")
    p.add_argument("--vars", type=int, default=30, help="number of sets (sc)")
    p.add_argument("--cons", type=int, default=60, help="number of elements (sc)")
    p.add_argument("--density", type=float, default=0.05, help="set membership probability (sc)")
    p.add_argument("--items", type=int, default=20, help="number of items (ca)")
    p.add_argument("--bids", type=int, default=30, help="number of bids (ca)")
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("solve", parents=[common], help="branch-and-bound on one instance")
    p.add_argument("--instance", required=True)
    p.add_argument("--node-limit", type=int, default=10**9)
    p.add_argument("--time-limit", type=float, default=None, help="seconds")
    p.add_argument("--gap", type=float, default=1e-9, help="relative gap limit")
    p.add_argument("--out", default=None, help="solution JSON")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("lns", parents=[common], help="run LNS with one destroy heuristic")
    p.add_argument("--instance", required=True)
    p.add_argument("--method", required=True,
                   choices=["random", "graph", "lb", "lb_relax", "policy", "policy_greedy", "policy_sampling"])
    p.add_argument("--params", default=None, help="LNS parameter JSON")
    p.add_argument("--weights", default=None, help="model file for policy methods")
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--out", required=True, help="events CSV")
    p.set_defaults(func=cmd_lns)

    p = sub.add_parser("collect", parents=[common], help="collect expert training data")
    p.add_argument("--instances", required=True, help="instance directory")
    p.add_argument("--config", default=None, help="training/collection config JSON")
    p.add_argument("--out", required=True, help="JSON-lines dataset")
    p.set_defaults(func=cmd_collect)

    p = sub.add_parser("train", parents=[common], help="train the policy network")
    p.add_argument("--data", required=True)
    p.add_argument("--val", default=None, help="held-out dataset")
    p.add_argument("--loss", choices=["cl", "il"], default="cl")
    p.add_argument("--config", default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--history", default=None, help="history CSV (default next to --out)")
    p.add_argument("--out", required=True, help="weights file")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="run an experiment grid")
    p.add_argument("--config", required=True, help="experiment JSON")
    p.add_argument("--seeds", type=int, nargs="*", default=None)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", parents=[common], help="summarize metrics.csv")
    p.add_argument("--metrics", required=True)
    p.add_argument("--threshold", type=float, default=0.01)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else 2
    if args.seed is None:
        args.seed = _env_seed()
    if args.threads < 1:
        parser.print_usage(sys.stderr)
        print("cllns: error: --threads must be >= 1", file=sys.stderr)
        return 2
    logging.basicConfig(level=getattr(logging, args.log_level), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (DomainError, ValueError, OSError, RuntimeError) as exc:
        print(f"cllns: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
