"""SI diffusion with truncated-Gaussian edge delays, and partial timestamp observations."""

from __future__ import annotations

import csv
import heapq
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._io import atomic_write
from .graph import Graph
from .validation import check_rng, check_unit_interval


class ObservationError(ValueError):
    pass


@dataclass(frozen=True)
class DiffusionParams:
    mu: float
    sigma2: float
    start_times: tuple[float, ...] | None = None

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"mean delay must be positive, got {self.mu}")
        if not self.sigma2 >= 0:
            raise ValueError(f"delay variance must be non-negative, got {self.sigma2}")


@dataclass(frozen=True)
class DiffusionOutcome:
    sources: tuple[int, ...]
    infection_time: np.ndarray
    infecting_source: np.ndarray  # index into ``sources``; -1 if never infected

    @property
    def infected(self) -> np.ndarray:
        return np.flatnonzero(np.isfinite(self.infection_time))


class Observations:
    """Observed nodes with their first-infection timestamps, in a fixed order."""

    __slots__ = ("nodes", "times")

    def __init__(self, nodes, times):
        nodes = np.asarray(nodes)
        times = np.array(times, dtype=np.float64)  # own copy; frozen below
        if nodes.ndim != 1 or times.ndim != 1 or len(nodes) != len(times):
            raise ObservationError("nodes and times must be 1-D and of equal length")
        if len(nodes) and not np.issubdtype(nodes.dtype, np.integer):
            as_int = nodes.astype(np.int64)
            if not np.array_equal(as_int, nodes):
                raise ObservationError("observed node ids must be integers")
            nodes = as_int
        nodes = nodes.astype(np.int64)
        vals, counts = np.unique(nodes, return_counts=True)
        if np.any(counts > 1):
            raise ObservationError(f"node {int(vals[counts > 1][0])} observed more than once")
        if not np.all(np.isfinite(times)):
            raise ObservationError("timestamps must be finite")
        nodes.setflags(write=False)
        times.setflags(write=False)
        self.nodes = nodes
        self.times = times

    def __len__(self) -> int:
        return len(self.nodes)

    def __repr__(self) -> str:
        return f"Observations(n={len(self)})"

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Observations)
            and np.array_equal(self.nodes, other.nodes)
            and np.array_equal(self.times, other.times)
        )

    def time_of(self) -> dict[int, float]:
        return dict(zip(self.nodes.tolist(), self.times.tolist()))

    def subset(self, nodes: Sequence[int]) -> "Observations":
        """Observations restricted to ``nodes``, keeping this object's order."""
        keep = np.isin(self.nodes, np.asarray(list(nodes), dtype=np.int64))
        return Observations(self.nodes[keep], self.times[keep])

    def validate_against(self, g: Graph) -> "Observations":
        for v in self.nodes:
            g.check_node(int(v))
        return self

    def earliest(self) -> int:
        """Node with the smallest timestamp, smallest id on ties."""
        order = np.lexsort((self.nodes, self.times))
        return int(self.nodes[order[0]])


def sample_truncated_gaussian(mu: float, sigma2: float, rng=None, size=None):
    """Draws from N(mu, sigma2) conditioned on being non-negative, by rejection."""
    if sigma2 < 0:
        raise ValueError(f"variance must be non-negative, got {sigma2}")
    if not mu > 0:
        raise ValueError(f"mean must be positive, got {mu}")
    rng = check_rng(rng)
    if sigma2 == 0:
        return float(mu) if size is None else np.full(size, float(mu))
    sigma = math.sqrt(sigma2)
    if size is None:
        while True:
            x = rng.normal(mu, sigma)
            if x >= 0:
                return float(x)
    out = rng.normal(mu, sigma, size)
    bad = out < 0
    while bad.any():
        out[bad] = rng.normal(mu, sigma, int(bad.sum()))
        bad = out < 0
    return out


def simulate(g: Graph, sources: Sequence[int], params: DiffusionParams, rng=None) -> DiffusionOutcome:
    """Run SI diffusion from ``sources``.

    One delay is drawn per undirected edge; infection times are the earliest
    arrivals over all sources.  Equal-time ties go to the smaller source index,
    then the smaller node id.
    """
    sources = tuple(g.check_node(s) for s in sources)
    if not sources:
        raise ValueError("at least one source is required")
    if len(set(sources)) != len(sources):
        raise ValueError("sources must be distinct")
    starts = params.start_times
    if starts is None:
        starts = (0.0,) * len(sources)
    if len(starts) != len(sources):
        raise ValueError(f"{len(starts)} start times for {len(sources)} sources")
    rng = check_rng(rng)

    edges = g.edges()
    delays = sample_truncated_gaussian(params.mu, params.sigma2, rng, size=len(edges))
    delay = {}
    for (u, v), d in zip(edges, delays.tolist()):
        delay[u, v] = d
        delay[v, u] = d

    n = g.node_count
    time = [math.inf] * n
    owner = [-1] * n
    done = [False] * n
    heap = [(float(t), i, s) for i, (s, t) in enumerate(zip(sources, starts))]
    heapq.heapify(heap)
    adj = g.adjacency
    while heap:
        t, i, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        time[u] = t
        owner[u] = i
        for v in adj[u]:
            if not done[v]:
                heapq.heappush(heap, (t + delay[u, v], i, v))
    return DiffusionOutcome(sources, np.array(time), np.array(owner, dtype=np.int64))


def sample_observations(outcome: DiffusionOutcome, sources: Sequence[int] | None, fraction: float, rng=None) -> Observations:
    """Uniformly sample a ``fraction`` of the infected non-source nodes.

    The count is ``round(fraction * eligible)``; fewer than 3 is an error.
    """
    fraction = check_unit_interval("fraction", fraction, open_left=True)
    rng = check_rng(rng)
    if sources is None:
        sources = outcome.sources
    eligible = np.setdiff1d(outcome.infected, np.asarray(list(sources), dtype=np.int64))
    k = int(round(fraction * len(eligible)))
    if k < 3:
        raise ObservationError(f"fraction {fraction} of {len(eligible)} eligible nodes gives {k} observations; need at least 3")
    picked = np.sort(rng.choice(eligible, size=k, replace=False))
    return Observations(picked, outcome.infection_time[picked])


def save_observations(obs: Observations, path) -> None:
    with atomic_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node", "timestamp"])
        for v, t in zip(obs.nodes.tolist(), obs.times.tolist()):
            w.writerow([v, repr(t)])


def load_observations(path, graph: Graph | None = None) -> Observations:
    nodes, times = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["node", "timestamp"]:
            raise ObservationError(f"{path}: expected header 'node,timestamp'")
        seen = set()
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise ObservationError(f"{path}:{lineno}: expected 2 fields, got {len(row)}")
            try:
                v = int(row[0])
            except ValueError:
                raise ObservationError(f"{path}:{lineno}: node id {row[0]!r} is not an integer") from None
            try:
                t = float(row[1])
            except ValueError:
                raise ObservationError(f"{path}:{lineno}: timestamp {row[1]!r} is not numeric") from None
            if not math.isfinite(t):
                raise ObservationError(f"{path}:{lineno}: timestamp must be finite")
            if v in seen:
                raise ObservationError(f"{path}:{lineno}: node {v} listed twice")
            seen.add(v)
            nodes.append(v)
            times.append(t)
    obs = Observations(np.array(nodes, dtype=np.int64), np.array(times))
    if graph is not None:
        obs.validate_against(graph)
    return obs


def save_outcome(outcome: DiffusionOutcome, path) -> None:
    with atomic_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node", "infection_time", "source_index"])
        for v, (t, s) in enumerate(zip(outcome.infection_time.tolist(), outcome.infecting_source.tolist())):
            w.writerow([v, repr(t), s])
