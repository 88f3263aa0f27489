"""Command-line entry point: ``mbdiff {generate,seeds,experiment,bound,eia}``."""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import eia, experiments, netgen, seedsel
from .behavior import PAPER_BEHAVIORS, BehaviorError, BehaviorSet, ModelParams
from .diffuse import SeedAssignment, stream

EXIT_OK, EXIT_USAGE, EXIT_NONCONVERGED, EXIT_PARTIAL = 0, 1, 2, 3

RUN_COLUMNS = ("participation", "adoption", "utilization", "epochs", "converged", "seed_digest")
SUMMARY_COLUMNS = ("metric", "mean", "stderr", "ci_low", "ci_high")
CSV_COLUMNS = ("experiment_id", "heuristic", "variant", "strategy", "topology", "mode", "run",
               *RUN_COLUMNS, *SUMMARY_COLUMNS)

# config-file keys and their types; flags of the same name (dashes for underscores) override them
CONFIG_KEYS = {
    "graph": str, "generator": str, "n": int, "k": int, "costs": list, "utils": list,
    "w": float, "alpha": float, "b": int, "heuristic": str, "multiplicity": str, "topup": str,
    "strategy": str, "mode": str, "runs": int, "seed": int, "max_epochs": int,
    "adoption_mode": str, "threshold_mode": str, "kkt_runs": int,
}
DEFAULTS = {
    "generator": "pa", "n": 500, "w": 0.5, "alpha": 0.1, "heuristic": "ciw-rank",
    "multiplicity": "s", "topup": "t", "strategy": "uniform", "mode": "ta", "runs": 1000,
    "seed": 0, "adoption_mode": "sticky", "threshold_mode": "different", "kkt_runs": 1000,
}

log = logging.getLogger("mbdiff")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.6f}"
    return str(x)


def _digest(obj) -> str:
    return hashlib.sha1(json.dumps(obj, sort_keys=True).encode()).hexdigest()[:12]


def _seed_digest(seeds: SeedAssignment) -> str:
    return _digest(seeds.pairs())


# -- configuration resolution -------------------------------------------------------

def load_config(path) -> dict:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise UsageError(f"config file {path} is not valid JSON: {e}") from None
    if not isinstance(raw, dict):
        raise UsageError("config file must hold a flat key-value object")
    problems = []
    for key, value in raw.items():
        if key not in CONFIG_KEYS:
            problems.append(f"{key}: unknown key")
        elif CONFIG_KEYS[key] is list and not isinstance(value, list):
            problems.append(f"{key}: expected an array")
        elif CONFIG_KEYS[key] is int and (not isinstance(value, int) or isinstance(value, bool)):
            problems.append(f"{key}: expected an integer")
        elif CONFIG_KEYS[key] is float and not isinstance(value, (int, float)):
            problems.append(f"{key}: expected a number")
        elif CONFIG_KEYS[key] is str and not isinstance(value, str):
            problems.append(f"{key}: expected a string")
    if problems:
        raise UsageError("invalid config: " + "; ".join(problems))
    return raw


def resolve(args) -> dict:
    """Defaults, then the config file, then explicit flags."""
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        cfg.update(load_config(args.config))
    for key in CONFIG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    return cfg


def behaviors_from(cfg: dict) -> BehaviorSet:
    costs = cfg.get("costs")
    utils = cfg.get("utils")
    k = cfg.get("k")
    if costs is None:
        if k is not None and k != PAPER_BEHAVIORS.k:
            raise UsageError(f"k={k} needs explicit costs")
        costs = PAPER_BEHAVIORS.costs
    if k is not None and k != len(costs):
        raise UsageError(f"k={k} does not match {len(costs)} costs")
    try:
        return BehaviorSet(tuple(costs), tuple(utils if utils is not None else costs))
    except BehaviorError as e:
        raise UsageError(f"costs/utils: {e}") from None


def params_from(cfg: dict) -> ModelParams:
    try:
        return ModelParams(w=float(cfg["w"]), adoption_mode=cfg["adoption_mode"],
                           threshold_mode=cfg["threshold_mode"], max_epochs=cfg.get("max_epochs"))
    except BehaviorError as e:
        raise UsageError(str(e)) from None


def flags_from(cfg: dict) -> seedsel.VariantFlags:
    try:
        return seedsel.VariantFlags(cfg["multiplicity"], cfg["topup"])
    except seedsel.SeedSelectionError as e:
        raise UsageError(str(e)) from None


def experiment_config(cfg: dict) -> experiments.ExperimentConfig:
    try:
        return experiments.ExperimentConfig(
            generator=None if cfg.get("graph") else cfg["generator"], n=int(cfg["n"]),
            graph_path=cfg.get("graph"), behaviors=behaviors_from(cfg), alpha=float(cfg["alpha"]),
            b=cfg.get("b"), heuristic=cfg["heuristic"], flags=flags_from(cfg),
            strategy=cfg["strategy"], mode=cfg["mode"], runs=int(cfg["runs"]), seed=int(cfg["seed"]),
            params=params_from(cfg), kkt_runs=int(cfg["kkt_runs"]))
    except experiments.ExperimentError as e:
        raise UsageError(str(e)) from None


def _read_graph(path) -> netgen.Graph:
    if not path:
        raise UsageError("--graph is required")
    try:
        return netgen.read_edge_list(path)
    except FileNotFoundError:
        raise UsageError(f"graph file not found: {path}") from None
    except netgen.GraphError as e:
        raise UsageError(f"{path}: {e}") from None


def _write(text: str, out) -> None:
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _label(g: netgen.Graph, v: int):
    return g.labels[v] if g.labels is not None else v


# -- commands ------------------------------------------------------------------------

def cmd_generate(args) -> int:
    params = {}
    if args.generator == "sw":
        params = {"ring_neighbors": args.ring_neighbors, "p_rewire": args.p}
    elif args.generator == "sc":
        params = {"avg_degree": args.avg_degree}
    elif args.generator == "regular":
        params = {"degree": args.degree}
    try:
        g = netgen.generate(args.generator, args.n, np.random.default_rng(args.seed), **params)
    except netgen.GraphError as e:
        raise UsageError(str(e)) from None
    _write(netgen.format_edge_list(g), args.out)
    return EXIT_OK


def format_seeds(g, seeds: SeedAssignment, budget) -> str:
    buf = io.StringIO()
    buf.write(f"# budget {','.join(str(c) for c in budget.counts)}\n")
    for v, i in seeds.pairs():
        buf.write(f"{_label(g, v)} {i}\n")
    return buf.getvalue()


def read_seeds(path, g: netgen.Graph, k: int) -> SeedAssignment:
    index = {lab: v for v, lab in enumerate(g.labels)} if g.labels is not None else None
    sets = [[] for _ in range(k)]
    try:
        lines = Path(path).read_text().splitlines()
    except FileNotFoundError:
        raise UsageError(f"seeds file not found: {path}") from None
    for lineno, line in enumerate(lines, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            node, beh = (int(t) for t in line.split())
        except ValueError:
            raise UsageError(f"{path}:{lineno}: expected 'node behavior'") from None
        v = index.get(node) if index is not None else node
        if v is None or not 0 <= v < g.node_count or not 0 <= beh < k:
            raise UsageError(f"{path}:{lineno}: node or behavior out of range")
        sets[beh].append(v)
    return SeedAssignment.from_lists(sets)


def cmd_seeds(args) -> int:
    cfg = resolve(args)
    g = _read_graph(cfg.get("graph"))
    if cfg["heuristic"] not in seedsel.HEURISTICS:
        raise UsageError(f"unknown heuristic {cfg['heuristic']!r}")
    beh = behaviors_from(cfg)
    n = g.node_count
    total = cfg["b"] if cfg.get("b") is not None else experiments.seed_count(cfg["alpha"], n, beh.k)
    try:
        budget = experiments.distribute_behaviors(cfg["strategy"], total, beh.costs)
    except experiments.ExperimentError as e:
        raise UsageError(str(e)) from None
    resource = experiments.fixed_resources(cfg["seed"], n)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", seedsel.PartialAssignmentWarning)
        seeds = seedsel.select_seeds(cfg["heuristic"], g, resource, budget, beh, flags_from(cfg),
                                     params_from(cfg), rng=stream(cfg["seed"], 3),
                                     runs=cfg["kkt_runs"])
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    _write(format_seeds(g, seeds, budget), args.out)
    return EXIT_PARTIAL if seeds.partial else EXIT_OK


def format_experiment(result: experiments.ExperimentResult, cfg: dict) -> str:
    c = result.config
    exp_id = _digest({k: v for k, v in sorted(cfg.items()) if k != "config"})
    topology = Path(c.graph_path).name if c.graph_path else f"{c.generator}-{c.n}"
    variant = c.flags.label if c.heuristic != experiments.ALL_SEEDED else "-"
    common = [exp_id, c.heuristic, variant, c.strategy, topology, c.mode]
    digests = [_seed_digest(s) for s in result.seeds]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    runs = result.runs
    for r in range(len(runs)):
        digest = digests[r] if len(digests) > 1 else digests[0]
        w.writerow(common + [r] + [_fmt(x) for x in (runs.participation[r], runs.adoption[r],
                                                      runs.utilization[r], runs.epochs[r],
                                                      runs.converged[r])]
                   + [digest] + [""] * len(SUMMARY_COLUMNS))
    for m in experiments.METRICS:
        s = result[m]
        w.writerow(common + ["summary"] + [""] * len(RUN_COLUMNS)
                   + [m] + [_fmt(x) for x in (s.mean, s.stderr, s.ci_low, s.ci_high)])
    return buf.getvalue()


def cmd_experiment(args) -> int:
    cfg = resolve(args)
    config = experiment_config(cfg)
    try:
        result = experiments.run_experiment(config)
    except (experiments.ExperimentError, netgen.GraphError) as e:
        raise UsageError(str(e)) from None
    _write(format_experiment(result, cfg), args.out)
    if not result.all_converged:
        print(f"warning: {int((~result.runs.converged).sum())} run(s) hit the epoch cap",
              file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


def cmd_bound(args) -> int:
    cfg = resolve(args)
    beh = behaviors_from(cfg)
    points = experiments.full_utilization_points(beh.costs)
    value = experiments.max_utilization(points)
    lines = []
    if args.points:
        lines.append("points " + ",".join(f"{p:g}" for p in points))
    lines.append(f"{round(value, 12):g}")
    _write("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_eia(args) -> int:
    cfg = resolve(args)
    g = _read_graph(cfg.get("graph"))
    beh = behaviors_from(cfg)
    if not args.seeds:
        raise UsageError("--seeds is required")
    seeds = read_seeds(args.seeds, g, beh.k)
    resource = experiments.fixed_resources(cfg["seed"], g.node_count)
    load = seeds.masks(g.node_count)
    for v in np.flatnonzero(load):
        need = sum(beh.costs[i] for i in range(beh.k) if load[v] >> i & 1)
        if resource[v] <= need:
            resource[v] = need
    try:
        ia = eia.compute_IA(g, beh, resource, seeds, params_from(cfg))
    except eia.EnumerationCapError as e:
        raise UsageError(str(e)) from None
    lines = ["behavior,cost,expected_immediate_adoption"]
    lines += [f"{i},{_fmt(beh.costs[i])},{_fmt(x)}" for i, x in enumerate(ia)]
    lines.append(f"total,,{_fmt(float(np.sum(ia)))}")
    _write("\n".join(lines) + "\n", args.out)
    return EXIT_OK


# -- parser ---------------------------------------------------------------------------

def _model_flags(p):
    p.add_argument("--config", help="flat JSON key-value file; flags override its values")
    p.add_argument("--k", type=int)
    p.add_argument("--costs", type=_floats, help="comma-separated behavior costs, ascending")
    p.add_argument("--utils", type=_floats, help="comma-separated utilities (default: equal to costs)")
    p.add_argument("--w", type=float, help="weight on utility in the payoff")
    p.add_argument("--max-epochs", dest="max_epochs", type=int)
    p.add_argument("--adoption-mode", dest="adoption_mode", choices=("sticky", "reevaluate"))
    p.add_argument("--threshold-mode", dest="threshold_mode", choices=("different", "matched"))
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, help="worker threads for the simulation kernels")
    p.add_argument("--out", help="output file (default: stdout)")


def _seeding_flags(p):
    p.add_argument("--graph", help="edge-list file")
    p.add_argument("--alpha", type=float, help="seed fraction of the population")
    p.add_argument("--b", type=int, help="total seed count (overrides --alpha)")
    p.add_argument("--heuristic")
    p.add_argument("--multiplicity", choices=("s", "m"))
    p.add_argument("--topup", choices=("t", "nt"))
    p.add_argument("--strategy", choices=experiments.STRATEGIES)
    p.add_argument("--kkt-runs", dest="kkt_runs", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mbdiff", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="write a synthetic topology as an edge list")
    p.add_argument("generator", choices=sorted(netgen.GENERATORS))
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--p", type=float, default=0.2, help="small-world rewiring probability")
    p.add_argument("--ring-neighbors", dest="ring_neighbors", type=int, default=2)
    p.add_argument("--avg-degree", dest="avg_degree", type=float, default=10.0)
    p.add_argument("--degree", type=int, default=3, help="degree of the random regular graph")
    p.add_argument("--out")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("seeds", help="select seeds for a graph")
    _model_flags(p)
    _seeding_flags(p)
    p.set_defaults(func=cmd_seeds)

    p = sub.add_parser("experiment", help="run a Monte Carlo experiment and emit CSV")
    _model_flags(p)
    _seeding_flags(p)
    p.add_argument("--generator", choices=sorted(netgen.GENERATORS))
    p.add_argument("--n", type=int)
    p.add_argument("--mode", choices=("ta", "na"))
    p.add_argument("--runs", type=int)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("bound", help="maximum expected utilization for a cost set")
    _model_flags(p)
    p.add_argument("--points", action="store_true", help="also print the full utilization points")
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("eia", help="expected immediate adoption of a seed file")
    _model_flags(p)
    p.add_argument("--graph", help="edge-list file")
    p.add_argument("--seeds", help="seed file as written by the seeds command")
    p.set_defaults(func=cmd_eia)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:  # --help or a parse error; argparse already printed
        return e.code if isinstance(e.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "threads", None):
        import numba
        numba.set_num_threads(max(1, min(args.threads, numba.config.NUMBA_NUM_THREADS)))
    try:
        return args.func(args)
    except UsageError as e:
        print(f"mbdiff: error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
