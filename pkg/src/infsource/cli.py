"""Command line: ``infsource generate|simulate|estimate|benchmark``.

Every subcommand accepts ``--config FILE``, a JSON object whose keys mirror the
long flags (``mean_degree`` or ``mean-degree``); flags given on the command
line win.  Node ids in files and flags are the ids used in the edge list.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from . import __version__
from ._io import atomic_write
from .diffusion import DiffusionParams, Observations, load_observations, sample_observations, save_observations, simulate
from .evaluation import load_spec, run_benchmark, write_result
from .graph import GENERATORS, generate, graph_stats, load_edge_list, save_edge_list
from .gromov import SCALED_IDENTITY, TARGET_KINDS
from .multi import scce
from .single import ALGORITHMS

log = logging.getLogger("infsource")


class CliError(Exception):
    pass


_SINGLE_REPORT = {
    "type": "object",
    "required": ["source", "t0", "mu", "sigma2", "alpha", "theta", "ranking"],
    "additionalProperties": False,
    "properties": {
        "source": {},
        "t0": {"type": "number"},
        "mu": {"type": "number"},
        "sigma2": {"type": "number", "minimum": 0},
        "alpha": {"type": ["number", "null"]},
        "theta": {"type": ["number", "null"]},
        "ranking": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["node", "log_score"],
                "additionalProperties": False,
                "properties": {"node": {}, "log_score": {"type": ["number", "null"]}},
            },
        },
    },
}

# JSON written by ``estimate``; node ids are edge-list labels.
REPORT_SCHEMA = {
    "oneOf": [
        _SINGLE_REPORT,
        {
            "type": "object",
            "required": ["clusters", "L"],
            "additionalProperties": False,
            "properties": {
                "L": {"type": "integer", "minimum": 1},
                "clusters": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "required": ["anchor", "candidates_size", "observations_size", "source", "estimate"],
                        "additionalProperties": False,
                        "properties": {
                            "anchor": {},
                            "candidates_size": {"type": "integer", "minimum": 1},
                            "observations_size": {"type": "integer", "minimum": 1},
                            "source": {},
                            "estimate": {"oneOf": [{"type": "null"}, _SINGLE_REPORT]},
                        },
                    },
                },
            },
        },
    ]
}


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in str(text).split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in str(text).split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="infsource", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON file with defaults for the flags below")
        sp.add_argument("-v", "--verbose", action="store_true", help="debug logging")
        return sp

    g = common(sub.add_parser("generate", help="write a random graph as an edge list"))
    g.add_argument("--family", choices=sorted(GENERATORS))
    g.add_argument("--nodes", type=int)
    g.add_argument("--mean-degree", type=float)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out")

    s = common(sub.add_parser("simulate", help="run a diffusion and sample observations"))
    s.add_argument("--graph")
    s.add_argument("--sources", type=_int_list)
    s.add_argument("--start-times", type=_float_list)
    s.add_argument("--mu", type=float, default=2.0)
    s.add_argument("--sigma2", type=float, default=1.0)
    s.add_argument("--fraction", type=float, default=0.3)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out-obs")

    e = common(sub.add_parser("estimate", help="estimate sources from observations"))
    e.add_argument("--mode", choices=["single", "multi"], default="single")
    e.add_argument("--graph")
    e.add_argument("--obs")
    e.add_argument("--target", choices=TARGET_KINDS, default=SCALED_IDENTITY)
    e.add_argument("--max-sources", type=int)
    e.add_argument("--algorithm", choices=sorted(ALGORITHMS), default="gssi")
    e.add_argument("--out", help="write the JSON report here instead of standard output")

    b = common(sub.add_parser("benchmark", help="run a benchmark spec"))
    b.add_argument("--spec")
    b.add_argument("--workers", type=int, default=1)
    b.add_argument("--out-dir")
    return p


REQUIRED = {
    "generate": ["family", "nodes", "out"],
    "simulate": ["graph", "sources", "out_obs"],
    "estimate": ["graph", "obs"],
    "benchmark": ["spec", "out_dir"],
}

_PARSERS = {"sources": _int_list, "start_times": _float_list}


def resolve(argv=None) -> argparse.Namespace:
    """Parse flags, fill unset ones from ``--config`` and check required values."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            with open(args.config) as fh:
                config = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            parser.error(f"cannot read config {args.config}: {exc}")
        if not isinstance(config, dict):
            parser.error(f"config {args.config} must hold a JSON object")
        sub = parser._subparsers._group_actions[0].choices[args.command]
        defaults = {a.dest: a.default for a in sub._actions}
        for key, value in config.items():
            dest = key.replace("-", "_")
            if dest not in defaults or dest in ("config", "help"):
                parser.error(f"config {args.config}: unknown key {key!r} for {args.command}")
            if not _given(argv, dest):
                if dest in _PARSERS and isinstance(value, str):
                    value = _PARSERS[dest](value)
                setattr(args, dest, value)
    missing = [k for k in REQUIRED[args.command] if getattr(args, k) is None]
    if missing:
        parser.error(f"{args.command}: missing required option(s): " + ", ".join("--" + m.replace("_", "-") for m in missing))
    return args


def _given(argv, dest) -> bool:
    flag = "--" + dest.replace("_", "-")
    argv = sys.argv[1:] if argv is None else argv
    return any(a == flag or a.startswith(flag + "=") for a in argv)


def _load_graph(path):
    g, report = load_edge_list(path)
    index = {x: i for i, x in enumerate(report.labels)}
    return g, report.labels, index


def _internal(index, ids, what):
    try:
        return [index[x] for x in ids]
    except KeyError as exc:
        raise CliError(f"{what} {exc.args[0]!r} is not a node of the graph") from None


def cmd_generate(args):
    rng = np.random.default_rng(args.seed)
    g = generate(args.family, args.nodes, args.mean_degree, rng)
    save_edge_list(g, args.out)
    st = graph_stats(g)
    print(json.dumps({"nodes": g.node_count, "edges": g.edge_count, "edge_node_ratio": st.edge_node_ratio,
                      "diameter": st.diameter, "avg_pairwise_distance": st.avg_pairwise_distance}))


def cmd_simulate(args):
    g, labels, index = _load_graph(args.graph)
    sources = _internal(index, args.sources, "source")
    starts = tuple(args.start_times) if args.start_times else None
    params = DiffusionParams(args.mu, args.sigma2, starts)
    rng = np.random.default_rng(args.seed)
    outcome = simulate(g, sources, params, rng)
    obs = sample_observations(outcome, sources, args.fraction, rng)
    save_observations(Observations([labels[v] for v in obs.nodes], obs.times), args.out_obs)
    print(json.dumps({"observed": len(obs), "infected": int(len(outcome.infected))}))


def _relabel(obj, labels):
    if isinstance(obj, dict):
        return {k: (labels[v] if k in ("source", "node", "anchor") and v is not None else _relabel(v, labels))
                for k, v in obj.items()}
    if isinstance(obj, list):
        return [_relabel(v, labels) for v in obj]
    return obj


def cmd_estimate(args):
    g, labels, index = _load_graph(args.graph)
    raw = load_observations(args.obs)
    obs = Observations(_internal(index, raw.nodes.tolist(), "observed node"), raw.times)
    if args.mode == "multi":
        report = scce(g, obs, args.max_sources, args.target).to_dict()
    else:
        fn = ALGORITHMS[args.algorithm]
        est = fn(g, obs, args.target) if args.algorithm == "gssi" else fn(g, obs)
        report = est.to_dict()
    text = json.dumps(_relabel(report, labels), indent=2) + "\n"
    if args.out:
        with atomic_write(args.out) as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_benchmark(args):
    spec = load_spec(args.spec)
    result = run_benchmark(spec, workers=args.workers)
    paths = write_result(result, args.out_dir)
    print(json.dumps({k: str(v) for k, v in paths.items()}))


COMMANDS = {"generate": cmd_generate, "simulate": cmd_simulate, "estimate": cmd_estimate, "benchmark": cmd_benchmark}


def main(argv=None) -> int:
    args = resolve(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    config = {k: v for k, v in vars(args).items() if k not in ("verbose",)}
    log.info("resolved config: %s", json.dumps(config, sort_keys=True))
    try:
        COMMANDS[args.command](args)
    except (CliError, ValueError, ArithmeticError, OSError) as exc:
        print(f"infsource {args.command}: error: {exc}".splitlines()[0], file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
