"""Command-line surface: single runs, multi-seed aggregates, exploration
sweeps, baseline modes, and checkpoint export.

All emitted files are bit-stable for a given (config, seed): floats are
written with 9 significant digits, line endings are newline-only, and JSON
key order is fixed.
"""
from __future__ import annotations

import argparse
import concurrent.futures
import dataclasses
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from .analysis import (AggregateRecord, RunRecord, STRATEGY_NAMES,
                       aggregate_runs, metric_columns, metrics_row)
from .core import (ConstraintViolation, CreditMode, ExperimentConfig,
                   MatchingMode, TOMLDecodeError, load_config, save_config,
                   validate_config)
from .sim import run_experiment

log = logging.getLogger("dilemma")

_USAGE_ERRORS = (ConstraintViolation, TOMLDecodeError,
                 FileNotFoundError, IsADirectoryError)


def _fmt(value) -> str:
    return format(float(value), ".9g")


def _strategy_name(code: int) -> str:
    return STRATEGY_NAMES.get(code, "NA")


# --- file writers -----------------------------------------------------------

class MetricsWriter:
    """Streams metrics.csv rows as episodes finish."""

    def __init__(self, path: Path, n_agents: int):
        self._fh = open(path, "w", newline="\n")
        self._fh.write("episode," + ",".join(metric_columns(n_agents)) + "\n")

    def __call__(self, metrics) -> None:
        row = metrics_row(metrics)
        self._fh.write(str(metrics.episode) + "," + ",".join(map(_fmt, row)) + "\n")

    def close(self) -> None:
        self._fh.close()


def write_strategies_csv(path: Path, record: RunRecord) -> None:
    n = record.config.n_agents
    with open(path, "w", newline="\n") as fh:
        fh.write("episode," + ",".join(f"strat_agent_{i}" for i in range(n)) + "\n")
        for ep, classes in zip(record.episodes, record.strategy_classes):
            names = ",".join(_strategy_name(int(c)) for c in classes)
            fh.write(f"{int(ep)},{names}\n")


def write_network_json(path: Path, snapshot) -> None:
    nodes = [{
        "id": i,
        "strategy": _strategy_name(int(snapshot.strategies[i])),
        "centrality": float(snapshot.centrality[i]),
        "pos": [float(snapshot.positions[i, 0]), float(snapshot.positions[i, 1])],
    } for i in range(snapshot.network.n_agents)]
    edges = [{"from": i, "to": j, "w": int(w)}
             for (i, j), w in sorted(snapshot.network.weights.items())]
    payload = {"episode": int(snapshot.episode), "nodes": nodes, "edges": edges}
    with open(path, "w", newline="\n") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


def write_aggregate_csv(path: Path, agg: AggregateRecord) -> None:
    header = ["episode"]
    for col in agg.columns:
        header += [f"{col}_mean", f"{col}_std"]
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for k, ep in enumerate(agg.episodes):
            cells = [str(int(ep))]
            for c in range(len(agg.columns)):
                cells.append(_fmt(agg.mean[k, c]))
                cells.append(_fmt(agg.std[k, c]))
            fh.write(",".join(cells) + "\n")


def run_and_write(cfg: ExperimentConfig, out_dir: Path) -> RunRecord:
    """Execute one run and lay down the full artifact set in out_dir."""
    out_dir.mkdir(parents=True, exist_ok=True)
    save_config(cfg, out_dir / "config.resolved.toml")
    writer = MetricsWriter(out_dir / "metrics.csv", cfg.n_agents)
    started = time.perf_counter()
    try:
        record = run_experiment(cfg, metrics_sink=writer)
    finally:
        writer.close()
    write_strategies_csv(out_dir / "strategies.csv", record)
    for snapshot in record.checkpoints:
        cp_dir = out_dir / "checkpoints" / str(snapshot.episode)
        cp_dir.mkdir(parents=True, exist_ok=True)
        write_network_json(cp_dir / "network.json", snapshot)
    log.info("seed %d: %d episodes in %.1fs", cfg.seed, cfg.n_episodes,
             time.perf_counter() - started)
    return record


def _load(config_path: str, **overrides) -> ExperimentConfig:
    cfg = load_config(config_path)
    present = {k: v for k, v in overrides.items() if v is not None}
    if present:
        cfg = validate_config(dataclasses.replace(cfg, **present))
    return cfg


def _seed_worker(cfg: ExperimentConfig, out_dir: str) -> RunRecord:
    return run_and_write(cfg, Path(out_dir))


def _run_seeds(cfg: ExperimentConfig, seeds: list[int], out_dir: Path,
               parallelism: int) -> list[RunRecord]:
    jobs = [(dataclasses.replace(cfg, seed=s), str(out_dir / f"seed_{s}"))
            for s in seeds]
    if parallelism <= 1:
        return [_seed_worker(c, d) for c, d in jobs]
    with concurrent.futures.ProcessPoolExecutor(max_workers=parallelism) as pool:
        futures = [pool.submit(_seed_worker, c, d) for c, d in jobs]
        return [f.result() for f in futures]


# --- commands ---------------------------------------------------------------

def cmd_run(args) -> int:
    cfg = _load(args.config, seed=args.seed, credit_mode=args.credit_mode)
    run_and_write(cfg, Path(args.out))
    return 0


def cmd_aggregate(args) -> int:
    cfg = _load(args.config, credit_mode=args.credit_mode)
    out = Path(args.out)
    records = _run_seeds(cfg, args.seeds, out, args.parallelism)
    out.mkdir(parents=True, exist_ok=True)
    write_aggregate_csv(out / "aggregate.csv", aggregate_runs(records))
    return 0


def cmd_sweep(args) -> int:
    cfg = _load(args.config, credit_mode=args.credit_mode)
    for value in args.values:
        sub = validate_config(dataclasses.replace(cfg, **{args.param: value}))
        sub_dir = Path(args.out) / "sweep" / f"{args.param}={format(value, 'g')}"
        records = _run_seeds(sub, args.seeds, sub_dir, args.parallelism)
        sub_dir.mkdir(parents=True, exist_ok=True)
        write_aggregate_csv(sub_dir / "aggregate.csv", aggregate_runs(records))
    return 0


_MODE_ALIASES = {
    "random_matching": MatchingMode.RANDOM_MATCHING,
    "randommatching": MatchingMode.RANDOM_MATCHING,
    "two_player_fixed": MatchingMode.TWO_PLAYER_FIXED,
    "twoplayerfixed": MatchingMode.TWO_PLAYER_FIXED,
}


def cmd_baseline(args) -> int:
    key = args.mode.replace("-", "_").lower()
    if key not in _MODE_ALIASES:
        raise ConstraintViolation(
            "mode must be one of: random_matching, two_player_fixed")
    cfg = _load(args.config, credit_mode=args.credit_mode,
                matching_mode=_MODE_ALIASES[key])
    out = Path(args.out)
    records = _run_seeds(cfg, args.seeds, out, args.parallelism)
    out.mkdir(parents=True, exist_ok=True)
    write_aggregate_csv(out / "aggregate.csv", aggregate_runs(records))
    return 0


def cmd_export_network(args) -> int:
    """Flatten a checkpoint's network.json into nodes.csv and edges.csv for
    third-party graph tools."""
    src = Path(args.source)
    if src.is_dir():
        src = src / "network.json"
    with open(src) as fh:
        payload = json.load(fh)
    out = Path(args.out) if args.out else src.parent
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "nodes.csv", "w", newline="\n") as fh:
        fh.write("id,strategy,centrality,x,y\n")
        for node in payload["nodes"]:
            fh.write(f"{node['id']},{node['strategy']},{_fmt(node['centrality'])},"
                     f"{_fmt(node['pos'][0])},{_fmt(node['pos'][1])}\n")
    with open(out / "edges.csv", "w", newline="\n") as fh:
        fh.write("from,to,w\n")
        for edge in payload["edges"]:
            fh.write(f"{edge['from']},{edge['to']},{edge['w']}\n")
    return 0


# --- argument parsing -------------------------------------------------------

def _parse_seeds(text: str) -> list[int]:
    try:
        seeds = [int(part) for part in text.split(",") if part.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list: {text!r}") from None
    if not seeds:
        raise argparse.ArgumentTypeError("at least one seed required")
    return seeds


def _parse_values(text: str) -> list[float]:
    try:
        values = [float(part) for part in text.split(",") if part.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad value list: {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("at least one value required")
    return values


def _add_common(sub, seeds=False):
    sub.add_argument("--config", required=True, help="TOML experiment config")
    sub.add_argument("--out", required=True, help="output directory")
    sub.add_argument("--credit-mode", type=CreditMode, default=None,
                     choices=list(CreditMode), metavar="{ensuing-reward,zero}",
                     help="override how selection choices are rewarded")
    if seeds:
        sub.add_argument("--seeds", required=True, type=_parse_seeds,
                         metavar="S0,S1,...", help="comma-separated seed list")
        sub.add_argument("--parallelism", type=int, default=1,
                         help="max concurrent runs (default 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dilemma",
        description="Partner-selection dilemma experiments: run, aggregate, "
                    "sweep, baseline, export-network.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="single seeded run")
    _add_common(p)
    p.add_argument("--seed", type=int, default=None, help="override config seed")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("aggregate", help="multi-seed run with mean/std table")
    _add_common(p, seeds=True)
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("sweep", help="aggregate per exploration-rate value")
    _add_common(p, seeds=True)
    p.add_argument("--param", required=True,
                   choices=["epsilon_dilemma", "epsilon_selection"])
    p.add_argument("--values", required=True, type=_parse_values,
                   metavar="V0,V1,...", help="comma-separated values")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("baseline", help="aggregate under a baseline matching mode")
    _add_common(p, seeds=True)
    p.add_argument("--mode", required=True,
                   help="random_matching or two_player_fixed")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("export-network",
                       help="checkpoint network.json -> nodes.csv + edges.csv")
    p.add_argument("source", help="network.json file or checkpoint directory")
    p.add_argument("--out", default=None, help="output directory (default: alongside input)")
    p.set_defaults(func=cmd_export_network)
    return parser


def main(argv=None) -> int:
    level = os.environ.get("DILEMMA_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _USAGE_ERRORS as exc:
        print(f"dilemma: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - boundary: report and set exit code
        log.exception("command failed")
        print(f"dilemma: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
