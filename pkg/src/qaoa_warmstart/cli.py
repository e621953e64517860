"""Operator command line.

Subcommands: serve, search, generate, score, compare,
db {import,export,merge,stats,verify}, experiment {ids}.
Global flags: --config, --profile, --seed, --stores-dir.
"""

from __future__ import annotations

import argparse
import json
import signal
import sys
import threading
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import engine
from .config import PROFILES, AppConfig, ConfigError, load_config
from .corpus import seed_graphs
from .databank import Databank
from .engine import ParameterVector
from .experiments import EXPERIMENT_IDS, ExperimentSpec, run_experiment
from .generators import generate_best
from .graphs import parse_graph
from .optim import random_parameters
from .searchd import SearchDaemon
from .service import Accelerator, serve_forever


def _load_graph(arg: str, config: AppConfig):
    """Accept inline JSON or a path to a JSON file."""
    text = arg
    path = Path(arg)
    if path.exists():
        text = path.read_text(encoding="utf-8")
    return parse_graph(json.loads(text), nodes=config.profile.node_count)


def _build_config(args) -> AppConfig:
    config = load_config(args.config)
    overrides = {}
    if args.profile:
        if args.profile not in PROFILES:
            raise ConfigError(f"unknown profile {args.profile!r}")
        overrides["profile"] = PROFILES[args.profile]
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.stores_dir:
        overrides["stores_dir"] = Path(args.stores_dir)
    return replace(config, **overrides) if overrides else config


def _emit(payload) -> None:
    json.dump(payload, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


def cmd_serve(args, config: AppConfig) -> int:
    accelerator = Accelerator.from_stores(config)
    stop = threading.Event()
    daemon_thread = None
    daemon = None
    if config.daemon.enabled:
        daemon = SearchDaemon(
            accelerator.params_bank,
            accelerator.factor_bank,
            config.generator_settings(),
            config.opt_schedule,
            config.daemon,
            metric=config.metric_matrix(),
            params_path=config.params_path,
            factors_path=config.factors_path,
            seed=config.seed,
        )
        rng = np.random.default_rng(config.seed)
        n = config.profile.node_count or 12
        daemon.seed_tasks(
            seed_graphs(
                n, config.profile.corpus_families, config.profile.edge_count_range, rng
            )
        )
        daemon_thread = threading.Thread(
            target=daemon.run, kwargs={"stop": stop}, daemon=True
        )
        daemon_thread.start()

    def handle_signal(signum, frame):
        stop.set()

    signal.signal(signal.SIGINT, handle_signal)
    signal.signal(signal.SIGTERM, handle_signal)
    config.stores_dir.mkdir(parents=True, exist_ok=True)
    print(
        f"serving on http://{config.service.host}:{config.service.port} "
        f"(profile {config.profile.name}, stores {config.stores_dir})",
        file=sys.stderr,
    )
    serve_forever(accelerator, stop)
    if daemon_thread is not None:
        daemon_thread.join(timeout=60)
    return 0


def cmd_search(args, config: AppConfig) -> int:
    config.stores_dir.mkdir(parents=True, exist_ok=True)
    params_bank = (
        Databank.load(config.params_path, "params")
        if config.params_path.exists()
        else Databank("params")
    )
    factor_bank = (
        Databank.load(config.factors_path, "factors")
        if config.factors_path.exists()
        else Databank("factors")
    )
    daemon = SearchDaemon(
        params_bank,
        factor_bank,
        config.generator_settings(),
        config.opt_schedule,
        config.daemon,
        metric=config.metric_matrix(),
        params_path=config.params_path,
        factors_path=config.factors_path,
        seed=config.seed,
    )
    rng = np.random.default_rng(config.seed)
    n = config.profile.node_count or 12
    daemon.seed_tasks(
        seed_graphs(
            n, config.profile.corpus_families, config.profile.edge_count_range, rng
        )
    )
    stop = threading.Event()
    signal.signal(signal.SIGINT, lambda s, f: stop.set())
    done = daemon.run(max_tasks=args.tasks, stop=stop)
    _emit(
        {
            "tasks_done": done,
            "params_records": params_bank.stats(),
            "factor_records": factor_bank.stats(),
            "upserts": len(daemon.upsert_log),
        }
    )
    if args.log:
        with open(args.log, "w", encoding="utf-8") as fh:
            for event in daemon.events:
                fh.write(json.dumps(event) + "\n")
    return 0


def cmd_generate(args, config: AppConfig) -> int:
    accelerator = Accelerator.from_stores(config)
    g = _load_graph(args.graph, config)
    result = generate_best(
        g,
        args.depth,
        accelerator.params_bank,
        accelerator.factor_bank,
        config.generator_settings(),
    )
    _emit(
        {
            "algorithm": result.algorithm,
            "parameter": list(result.params.values),
            "score": result.score,
        }
    )
    return 0


def cmd_score(args, config: AppConfig) -> int:
    g = _load_graph(args.graph, config)
    theta = ParameterVector.from_values(json.loads(args.params))
    _emit({"score": engine.score(g, theta, config.profile.qubit_ceiling)})
    return 0


def cmd_compare(args, config: AppConfig) -> int:
    accelerator = Accelerator.from_stores(config)
    g = _load_graph(args.graph, config)
    theta = ParameterVector.from_values(json.loads(args.params))
    best = generate_best(
        g,
        args.depth,
        accelerator.params_bank,
        accelerator.factor_bank,
        config.generator_settings(),
    )
    rng = np.random.default_rng(config.seed)
    _emit(
        {
            "max_score": best.score,
            "user_score": engine.score(g, theta, config.profile.qubit_ceiling),
            "random_score": engine.score(
                g, random_parameters(args.depth, rng), config.profile.qubit_ceiling
            ),
        }
    )
    return 0


def _open_bank(path: str) -> Databank:
    return Databank.load(path)


def cmd_db(args, config: AppConfig) -> int:
    if args.db_command == "stats":
        report = {}
        for label, path in (("params", config.params_path), ("factors", config.factors_path)):
            report[label] = Databank.load(path).stats() if Path(path).exists() else 0
        _emit({"S_p": report["params"], "S_o": report["factors"]})
        return 0
    if args.db_command == "export":
        bank = _open_bank(args.source)
        bank.save(args.dest)
        _emit({"exported": bank.stats(), "to": str(args.dest)})
        return 0
    if args.db_command == "import":
        dest = Path(args.dest)
        local = _open_bank(dest) if dest.exists() else None
        imported = _open_bank(args.source)
        if local is None:
            local = Databank(imported.kind)
        report = local.merge(imported)
        local.save(dest)
        _emit(
            {
                "created": report.created,
                "replaced": report.replaced,
                "rejected": report.rejected,
                "records": local.stats(),
            }
        )
        return 0
    if args.db_command == "merge":
        local = _open_bank(args.dest)
        imported = _open_bank(args.source)
        report = local.merge(imported)
        local.save(args.dest)
        _emit(
            {
                "created": report.created,
                "replaced": report.replaced,
                "rejected": report.rejected,
                "records": local.stats(),
            }
        )
        return 0
    if args.db_command == "verify":
        bank = _open_bank(args.source)
        failures = bank.verify_scores()
        _emit({"records": bank.stats(), "failures": failures})
        return 1 if failures else 0
    raise ConfigError(f"unknown db command {args.db_command!r}")


def cmd_experiment(args, config: AppConfig) -> int:
    spec = ExperimentSpec(
        experiment=args.experiment_id,
        corpus_size=args.corpus_size,
        seed=args.seed if args.seed is not None else config.seed,
        databank_tasks=args.tasks,
        out_dir=Path(args.out),
    )
    summary = run_experiment(spec, config)
    _emit(summary)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qaoa-warmstart",
        description="Warm-start parameter accelerator for QAOA on weighted Ising graphs",
    )
    parser.add_argument("--config", help="path to a JSON config file")
    parser.add_argument("--profile", help="profile name override")
    parser.add_argument("--seed", type=int, help="seed override")
    parser.add_argument("--stores-dir", help="databank directory override")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("serve", help="run the HTTP service (daemon per config)")

    p_search = sub.add_parser("search", help="run the background search daemon")
    p_search.add_argument("--tasks", type=int, default=None, help="stop after N tasks")
    p_search.add_argument("--log", help="write the task event log to this JSONL file")

    p_gen = sub.add_parser("generate", help="generate parameters for a graph")
    p_gen.add_argument("--graph", required=True, help="graph JSON (inline or file)")
    p_gen.add_argument("--depth", type=int, default=4)

    p_score = sub.add_parser("score", help="score parameters on a graph")
    p_score.add_argument("--graph", required=True)
    p_score.add_argument("--params", required=True, help="JSON list of 2p angles")

    p_cmp = sub.add_parser("compare", help="compare parameters against the system")
    p_cmp.add_argument("--graph", required=True)
    p_cmp.add_argument("--params", required=True)
    p_cmp.add_argument("--depth", type=int, default=4)

    p_db = sub.add_parser("db", help="databank administration")
    db_sub = p_db.add_subparsers(dest="db_command", required=True)
    db_sub.add_parser("stats", help="record counts for the configured stores")
    for name, needs_dest in (
        ("import", True),
        ("export", True),
        ("merge", True),
        ("verify", False),
    ):
        p = db_sub.add_parser(name)
        p.add_argument("source", help="store file to read")
        if needs_dest:
            p.add_argument("dest", help="store file to write")

    p_exp = sub.add_parser("experiment", help="run a desk-scale experiment")
    p_exp.add_argument("experiment_id", choices=EXPERIMENT_IDS)
    p_exp.add_argument("--corpus-size", type=int, default=50)
    p_exp.add_argument("--tasks", type=int, default=350, help="databank build size")
    p_exp.add_argument("--out", default="experiment-out")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _build_config(args)
        handler = {
            "serve": cmd_serve,
            "search": cmd_search,
            "generate": cmd_generate,
            "score": cmd_score,
            "compare": cmd_compare,
            "db": cmd_db,
            "experiment": cmd_experiment,
        }[args.command]
        return handler(args, config)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
