"""Accuracy metrics and the seeded benchmark runner."""

from __future__ import annotations

import csv
import itertools
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import jsonschema
import numpy as np
from scipy.optimize import linear_sum_assignment

from ._io import atomic_write
from .diffusion import DiffusionParams, sample_observations, simulate
from .graph import GENERATORS, Graph, all_pairs_distances, generate, shortest_distances
from .gromov import SCALED_IDENTITY, TARGET_KINDS
from .multi import scce
from .single import ALGORITHMS, SingleSourceEstimate
from .validation import trial_seed

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
ETA_MODES = ("zero", "avg-pairwise", "diameter")
MAX_SOURCE_ATTEMPTS = 1000
_EXHAUSTIVE_LIMIT = 50_000


class BenchmarkError(ValueError):
    pass


# -- metrics ---------------------------------------------------------------------


def error_distance(g: Graph, true_source: int, estimate: int) -> int:
    d = int(shortest_distances(g, true_source)[g.check_node(estimate)])
    if d < 0:
        raise ValueError(f"estimate {estimate} is not reachable from source {true_source}")
    return d


def rank_accuracy(ranking, true_source: int, gamma_percent: float, node_count: int) -> bool:
    """True iff ``true_source`` ranks within the top ``gamma_percent`` of ``node_count`` nodes.

    ``ranking`` is a ``SingleSourceEstimate`` or a sequence of node ids, best
    first, holding feasible candidates only.  Unranked sources count as misses.
    """
    if isinstance(ranking, SingleSourceEstimate):
        rank = ranking.rank_of(true_source)
    else:
        ranking = list(ranking)
        rank = ranking.index(true_source) + 1 if true_source in ranking else None
    if rank is None:
        return False
    return rank <= math.ceil(gamma_percent / 100.0 * node_count - 1e-9)


@dataclass(frozen=True)
class DeltaConfig:
    eta_mode: str
    eta: float

    def __post_init__(self):
        if self.eta_mode not in ETA_MODES:
            raise ValueError(f"unknown eta mode {self.eta_mode!r}; choose from {ETA_MODES}")
        if self.eta < 0:
            raise ValueError(f"eta must be non-negative, got {self.eta}")


def delta_config(mode: str, dist: np.ndarray) -> DeltaConfig:
    """Resolve an eta mode against an all-pairs distance matrix."""
    if mode == "zero":
        return DeltaConfig(mode, 0.0)
    n = dist.shape[0]
    if mode == "avg-pairwise":
        eta = float(dist[np.triu_indices(n, k=1)].mean()) if n > 1 else 0.0
        return DeltaConfig(mode, eta)
    if mode == "diameter":
        return DeltaConfig(mode, float(dist.max()))
    raise ValueError(f"unknown eta mode {mode!r}; choose from {ETA_MODES}")


def matching_cost(cost) -> float:
    """Minimum total cost of an injective matching of the shorter side of ``cost``."""
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2:
        raise ValueError("cost must be a matrix")
    if cost.shape[0] > cost.shape[1]:
        cost = cost.T
    k, m = cost.shape
    if k == 0:
        return 0.0
    if math.perm(m, k) <= _EXHAUSTIVE_LIMIT:
        rows = np.arange(k)
        return float(min(cost[rows, list(p)].sum() for p in itertools.permutations(range(m), k)))
    r, c = linear_sum_assignment(cost)
    return float(cost[r, c].sum())


def delta_metric(g: Graph | np.ndarray, true_sources: Sequence[int], estimates: Sequence[int], config: DeltaConfig | float = 0.0) -> float:
    """Matched source error with a penalty of ``eta`` per miscounted source.

    ``g`` is a graph or a precomputed all-pairs distance matrix.
    """
    eta = config.eta if isinstance(config, DeltaConfig) else float(config)
    S = [int(s) for s in true_sources]
    E = [int(e) for e in estimates]
    if not S:
        raise ValueError("at least one true source is required")
    if isinstance(g, Graph):
        cost = np.array([shortest_distances(g, s)[E] for s in S], dtype=np.float64).reshape(len(S), len(E))
    else:
        cost = np.asarray(g)[np.ix_(S, E)].astype(np.float64)
    if np.any(cost < 0):
        raise ValueError("some estimate is unreachable from a true source")
    matched = matching_cost(cost) if E else 0.0
    denom = min(len(E), len(S)) if eta == 0 else max(len(E), len(S))
    if denom == 0:
        return math.inf
    return (matched + eta * abs(len(S) - len(E))) / denom


def parameter_mse(mu_hat, sigma2_hat, mu, sigma2) -> tuple[float, float]:
    """Mean squared error of the fitted delay mean and variance; true values broadcast."""
    mu_hat = np.asarray(mu_hat, dtype=np.float64)
    sigma2_hat = np.asarray(sigma2_hat, dtype=np.float64)
    if mu_hat.size == 0 or mu_hat.shape != sigma2_hat.shape:
        raise ValueError("need matching, non-empty estimate arrays")
    return float(np.mean((mu_hat - mu) ** 2)), float(np.mean((sigma2_hat - sigma2) ** 2))


# -- benchmark spec ------------------------------------------------------------------

SINGLE_ALGORITHMS = tuple(ALGORITHMS)
MULTI_ALGORITHMS = ("scce",)

SPEC_SCHEMA = {
    "type": "object",
    "required": ["seed", "graph", "diffusion", "fractions", "trials", "algorithms"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
        "trials": {"type": "integer", "minimum": 0},
        "graph": {
            "type": "object",
            "required": ["family", "nodes"],
            "additionalProperties": False,
            "properties": {
                "family": {"enum": sorted(GENERATORS)},
                "nodes": {"type": "integer", "minimum": 2},
                "mean_degree": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "diffusion": {
            "type": "object",
            "required": ["mu", "sigma2"],
            "additionalProperties": False,
            "properties": {
                "mu": {"type": "number", "exclusiveMinimum": 0},
                "sigma2": {"type": "number", "minimum": 0},
            },
        },
        "fractions": {
            "type": "array",
            "minItems": 1,
            "items": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        },
        "sources": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "counts": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 1}},
                "min_distance": {"oneOf": [{"enum": ["none", "avg-pairwise"]}, {"type": "number", "minimum": 0}]},
            },
        },
        "algorithms": {
            "type": "array",
            "minItems": 1,
            "uniqueItems": True,
            "items": {"enum": list(SINGLE_ALGORITHMS + MULTI_ALGORITHMS)},
        },
        "target": {"enum": list(TARGET_KINDS)},
        "max_sources": {"type": ["integer", "null"], "minimum": 1},
        "eta_modes": {"type": "array", "items": {"enum": list(ETA_MODES)}},
        "gammas": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0, "maximum": 100}},
    },
}

DEFAULTS = {
    "name": "benchmark",
    "sources": {"counts": [1], "min_distance": "none"},
    "target": SCALED_IDENTITY,
    "max_sources": None,
    "eta_modes": list(ETA_MODES),
    "gammas": [1, 5, 10],
}


def check_spec(spec: dict) -> dict:
    """Validate a benchmark spec and fill in defaults.

    Schema violations raise ``BenchmarkError`` naming the offending field path.
    """
    try:
        jsonschema.validate(spec, SPEC_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise BenchmarkError(f"invalid benchmark spec at {where}: {exc.message}") from None
    out = {**DEFAULTS, **spec}
    out["sources"] = {**DEFAULTS["sources"], **spec.get("sources", {})}
    family = out["graph"]["family"]
    if family in ("er", "ba") and "mean_degree" not in out["graph"]:
        raise BenchmarkError(f"invalid benchmark spec at graph/mean_degree: required for family {family!r}")
    if any(c > 1 for c in out["sources"]["counts"]):
        single = [a for a in out["algorithms"] if a in SINGLE_ALGORITHMS]
        if single:
            raise BenchmarkError(f"invalid benchmark spec at algorithms: {single} need a single source per trial")
    if "mle-tree" in out["algorithms"] and family not in ("er-tree", "ba-tree"):
        raise BenchmarkError("invalid benchmark spec at algorithms: mle-tree needs a tree family")
    return out


def load_spec(path) -> dict:
    try:
        with open(path) as fh:
            spec = json.load(fh)
    except json.JSONDecodeError as exc:
        raise BenchmarkError(f"{path}: not valid JSON ({exc.msg} at line {exc.lineno})") from None
    return check_spec(spec)


# -- trials --------------------------------------------------------------------------

COLUMNS = [
    "trial", "fraction", "algorithm", "n_sources", "sources", "n_observed", "estimates", "L",
    "error", "rank", "mu_hat", "sigma2_hat", "alpha", "theta",
    "delta_zero", "delta_avg_pairwise", "delta_diameter",
]


def choose_sources(dist: np.ndarray, count: int, min_distance: float, rng) -> list[int]:
    """Uniform distinct sources whose pairwise distances are all at least ``min_distance``."""
    n = dist.shape[0]
    if count > n:
        raise BenchmarkError(f"cannot pick {count} sources from {n} nodes")
    for _ in range(MAX_SOURCE_ATTEMPTS):
        picked = [int(v) for v in rng.choice(n, size=count, replace=False)]
        d = dist[np.ix_(picked, picked)]
        if count == 1 or (d[np.triu_indices(count, k=1)] >= min_distance).all():
            return picked
    raise BenchmarkError(
        f"no {count} sources with pairwise distance >= {min_distance:.3f} after {MAX_SOURCE_ATTEMPTS} attempts"
    )


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return "" if math.isnan(x) else repr(x)
    return str(x)


def run_trial(spec: dict, index: int) -> tuple[list[dict], list[dict]]:
    """One trial: graph, sources and diffusion once, then every fraction and algorithm."""
    rng = np.random.default_rng(trial_seed(spec["seed"], index))
    gs = spec["graph"]
    g = generate(gs["family"], gs["nodes"], gs.get("mean_degree"), rng)
    dist = all_pairs_distances(g)
    etas = {m: delta_config(m, dist) for m in ETA_MODES}
    md = spec["sources"]["min_distance"]
    min_distance = 0.0 if md == "none" else etas["avg-pairwise"].eta if md == "avg-pairwise" else float(md)
    count = int(rng.choice(spec["sources"]["counts"]))
    sources = choose_sources(dist, count, min_distance, rng)
    params = DiffusionParams(spec["diffusion"]["mu"], spec["diffusion"]["sigma2"])
    outcome = simulate(g, sources, params, rng)

    rows, timings = [], []
    for fraction in spec["fractions"]:
        obs = sample_observations(outcome, sources, fraction, rng)
        for algo in spec["algorithms"]:
            start = time.perf_counter()
            row = {"trial": index, "fraction": fraction, "algorithm": algo, "n_sources": count,
                   "sources": ";".join(map(str, sources)), "n_observed": len(obs)}
            if algo in MULTI_ALGORITHMS:
                est = scce(g, obs, spec["max_sources"], spec["target"])
                found = est.sources
                row.update(L=est.L, error=None, rank=None, mu_hat=None, sigma2_hat=None, alpha=None, theta=None)
            else:
                fn = ALGORITHMS[algo]
                est = fn(g, obs, spec["target"]) if algo == "gssi" else fn(g, obs)
                found = [est.source]
                row.update(L=1, error=int(dist[sources[0], est.source]), rank=est.rank_of(sources[0]),
                           mu_hat=est.mu, sigma2_hat=est.sigma2, alpha=est.alpha, theta=est.theta)
            row["estimates"] = ";".join(map(str, found))
            for m in ETA_MODES:
                row["delta_" + m.replace("-", "_")] = delta_metric(dist, sources, found, etas[m])
            rows.append(row)
            timings.append({"trial": index, "fraction": fraction, "algorithm": algo,
                            "seconds": time.perf_counter() - start})
    return rows, timings


def _run_one(args):
    return run_trial(*args)


@dataclass
class BenchmarkResult:
    spec: dict
    rows: list[dict]
    timings: list[dict]

    def aggregate(self) -> dict:
        return aggregate(self.spec, self.rows)


def run_benchmark(spec: dict, workers: int = 1) -> BenchmarkResult:
    """Run every trial of ``spec``; output does not depend on ``workers``."""
    spec = check_spec(spec)
    if workers < 1:
        raise ValueError(f"workers must be at least 1, got {workers}")
    jobs = [(spec, i) for i in range(spec["trials"])]
    if workers == 1 or len(jobs) <= 1:
        results = [_run_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, jobs))
    rows = [r for rs, _ in results for r in rs]
    timings = [t for _, ts in results for t in ts]
    return BenchmarkResult(spec, rows, timings)


def _mean_se(values) -> dict:
    x = np.asarray([v for v in values if v is not None], dtype=np.float64)
    if x.size == 0:
        return {"mean": None, "se": None, "count": 0}
    se = float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else None
    return {"mean": float(x.mean()), "se": se, "count": int(x.size)}


def aggregate(spec: dict, rows: Sequence[dict]) -> dict:
    """Per (algorithm, fraction) means with standard errors."""
    nodes = spec["graph"]["nodes"]
    groups: dict[tuple, list[dict]] = {}
    for r in rows:
        groups.setdefault((r["algorithm"], r["fraction"]), []).append(r)
    out = []
    for (algo, fraction), rs in sorted(groups.items(), key=lambda kv: (spec["algorithms"].index(kv[0][0]), kv[0][1])):
        entry = {"algorithm": algo, "fraction": fraction, "trials": len(rs),
                 "L": _mean_se(r["L"] for r in rs)}
        for m in ETA_MODES:
            key = "delta_" + m.replace("-", "_")
            entry[key] = _mean_se(r[key] for r in rs)
        if algo in SINGLE_ALGORITHMS:
            entry["error"] = _mean_se(r["error"] for r in rs)
            entry["alpha"] = _mean_se(r["alpha"] for r in rs)
            entry["accuracy"] = {
                str(g): float(np.mean([r["rank"] is not None and r["rank"] <= math.ceil(g / 100 * nodes - 1e-9) for r in rs]))
                for g in spec["gammas"]
            }
            mse_mu, mse_s2 = parameter_mse([r["mu_hat"] for r in rs], [r["sigma2_hat"] for r in rs],
                                           spec["diffusion"]["mu"], spec["diffusion"]["sigma2"])
            entry["mse_mu"], entry["mse_sigma2"] = mse_mu, mse_s2
        out.append(entry)
    return {"schema_version": SCHEMA_VERSION, "name": spec["name"], "trials": spec["trials"], "groups": out}


def write_rows(rows: Iterable[dict], path, columns: Sequence[str] = COLUMNS) -> None:
    with atomic_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])


def write_result(result: BenchmarkResult, out_dir) -> dict[str, Path]:
    """Write ``trials.csv``, ``aggregate.json`` and ``timings.csv`` under ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {k: out_dir / v for k, v in
             (("trials", "trials.csv"), ("aggregate", "aggregate.json"), ("timings", "timings.csv"))}
    write_rows(result.rows, paths["trials"])
    with atomic_write(paths["aggregate"]) as fh:
        json.dump(result.aggregate(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    write_rows(result.timings, paths["timings"], ["trial", "fraction", "algorithm", "seconds"])
    return paths


__all__ = [
    "BenchmarkError",
    "BenchmarkResult",
    "DeltaConfig",
    "ETA_MODES",
    "aggregate",
    "check_spec",
    "choose_sources",
    "delta_config",
    "delta_metric",
    "error_distance",
    "load_spec",
    "matching_cost",
    "parameter_mse",
    "rank_accuracy",
    "run_benchmark",
    "run_trial",
    "write_result",
]
