"""Multiple-source estimation: observation clusters, MSR covering, SSSE splitting and SCCE.

Tree routines take either an undirected tree ``Graph`` or a ``SpanningTree``.
On a general graph, SCCE replaces the tree by an ascending BFS tree rooted at
each cluster anchor.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .diffusion import Observations
from .graph import ASCENDING, Graph, SpanningTree, bfs_tree
from .gromov import SCALED_IDENTITY, check_target_kind
from .single import EstimationError, SingleSourceEstimate, gssi

logger = logging.getLogger(__name__)


def _adjacency(tree) -> Sequence[Sequence[int]]:
    if isinstance(tree, SpanningTree):
        tree = tree.to_graph()
    if not isinstance(tree, Graph):
        raise TypeError(f"expected a Graph or SpanningTree, got {type(tree).__name__}")
    if tree.edge_count > tree.node_count - 1:
        raise ValueError("tree routines need an acyclic graph")
    return tree.adjacency


def _order(obs: Observations) -> list[int]:
    """Observed nodes by (timestamp, id)."""
    return [int(obs.nodes[i]) for i in np.lexsort((obs.nodes, obs.times))]


# -- clusters -------------------------------------------------------------------


@dataclass(frozen=True)
class ObservationCluster:
    anchor: int
    members: tuple[int, ...]  # sorted


@dataclass(frozen=True)
class SourceCluster:
    """An MSR anchor with its observation cluster and candidate region."""

    anchor: int
    observed: tuple[int, ...]
    candidates: tuple[int, ...]


def observation_cluster(tree, u: int, obs: Observations) -> ObservationCluster:
    """Observed nodes whose path from ``u`` carries strictly increasing timestamps.

    Equal timestamps count as increasing in node-id order, as if perturbed.

    One pruned traversal from ``u``: the walk stops below an observed node
    whose timestamp does not exceed the last observed timestamp on its path.
    """
    adj = _adjacency(tree)
    times = obs.time_of()
    members = []
    stack = [(int(u), -1, (-math.inf, -1))]
    while stack:
        v, parent, last = stack.pop()
        t = times.get(v)
        if t is not None:
            key = (t, v)  # equal timestamps are ordered by node id
            if not key > last:
                continue
            members.append(v)
            last = key
        for w in adj[v]:
            if w != parent:
                stack.append((w, v, last))
    return ObservationCluster(int(u), tuple(sorted(members)))


def candidate_region(tree, xi: int, obs: Observations) -> tuple[int, ...]:
    """B(xi, V): nodes reached from ``xi`` without entering another observed node."""
    adj = _adjacency(tree)
    observed = set(obs.nodes.tolist())
    xi = int(xi)
    seen = {xi}
    queue = deque([xi])
    while queue:
        v = queue.popleft()
        for w in adj[v]:
            if w not in seen and w not in observed:
                seen.add(w)
                queue.append(w)
    return tuple(sorted(seen))


def nu(tree, u: int, obs: Observations) -> int:
    """Earliest member of the observation cluster of ``u`` (smallest id on ties)."""
    members = observation_cluster(tree, u, obs).members
    if not members:
        raise ValueError(f"node {u} has an empty observation cluster")
    times = obs.time_of()
    return min(members, key=lambda v: (times[v], v))


def msr(tree, obs: Observations, max_sources: int | None = None) -> list[SourceCluster]:
    """Admissible covering of the observed set by observation clusters of early anchors.

    With ``max_sources`` set, observed nodes left after that many clusters are
    folded into the last cluster.
    """
    return _msr(lambda xi: tree, obs, max_sources)[0]


def _msr(tree_for, obs: Observations, max_sources):
    if max_sources is not None and max_sources < 1:
        raise ValueError(f"max_sources must be at least 1, got {max_sources}")
    remaining = _order(obs)
    clusters: list[SourceCluster] = []
    trees = []
    while remaining:
        if max_sources is not None and len(clusters) == max_sources:
            last = clusters[-1]
            clusters[-1] = SourceCluster(last.anchor, tuple(sorted(set(last.observed) | set(remaining))), last.candidates)
            break
        xi = remaining[0]
        tree = tree_for(xi)
        members = observation_cluster(tree, xi, obs).members
        clusters.append(SourceCluster(xi, members, candidate_region(tree, xi, obs)))
        trees.append(tree)
        covered = set(members)
        remaining = [v for v in remaining if v not in covered]
    return clusters, trees


# -- SSSE -----------------------------------------------------------------------


def _restrict(adj, nodes: Iterable[int]) -> dict[int, list[int]]:
    keep = set(nodes)
    return {v: [w for w in adj[v] if w in keep] for v in sorted(keep)}


def _bfs(sub: dict[int, list[int]], sources: Sequence[int]):
    """Distances and nearest-source labels from a multi-source BFS."""
    dist = {s: 0 for s in sources}
    label = {s: s for s in sources}
    queue = deque(sources)
    while queue:
        v = queue.popleft()
        for w in sub[v]:
            if w not in dist:
                dist[w] = dist[v] + 1
                label[w] = label[v]
                queue.append(w)
    return dist, label


def _farthest(dist: dict[int, int]) -> int:
    best = max(dist.values())
    return min(v for v, d in dist.items() if d == best)


def _longest_path(sub) -> list[int]:
    start = min(sub)
    a = _farthest(_bfs(sub, [start])[0])
    dist_a, _ = _bfs(sub, [a])
    b = _farthest(dist_a)
    # walk back from b to a along decreasing distance, smallest id first
    path = [b]
    while path[-1] != a:
        v = path[-1]
        path.append(min(w for w in sub[v] if dist_a.get(w) == dist_a[v] - 1))
    path.reverse()
    if path[0] > path[-1]:
        path.reverse()
    return path


def _mean_distance(sub) -> float:
    """Average pairwise distance of a tree from the subtree sizes across each edge."""
    n = len(sub)
    if n < 2:
        return 0.0
    root = min(sub)
    order, parent = [root], {root: None}
    for v in order:
        for w in sub[v]:
            if w not in parent:
                parent[w] = v
                order.append(w)
    size = dict.fromkeys(sub, 1)
    total = 0
    for v in reversed(order[1:]):
        size[parent[v]] += size[v]
        total += size[v] * (n - size[v])
    return total / (n * (n - 1) / 2)


def leaf_sums(sub, path: Sequence[int]) -> dict[int, int]:
    """s_P on interior nodes of ``path``: summed distance of off-path leaves projecting onto each node."""
    dist, label = _bfs(sub, list(path))
    on_path = set(path)
    s = {w: 0 for w in path[1:-1]}
    for v, nb in sub.items():
        if len(nb) == 1 and v not in on_path and label[v] in s:
            s[label[v]] += dist[v]
    return s


def first_valley(values: Sequence[float]) -> int | None:
    """Start of the first plateau bordered on both sides by strictly larger values."""
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[j + 1] == values[i]:
            j += 1
        if i > 0 and j + 1 < len(values) and values[i - 1] > values[i] < values[j + 1]:
            return i
        i = j + 1
    return None


def _split_edge(sub, dbar: float) -> tuple[int, int] | None:
    if len(sub) < 3:
        return None
    path = _longest_path(sub)
    if not len(path) - 1 > dbar:
        return None
    s = leaf_sums(sub, path)
    k = first_valley([s[w] for w in path[1:-1]])
    if k is None:
        return None
    return path[k + 1], path[k + 2]


def ssse_split(tree, nodes: Iterable[int] | None = None, dbar: float | None = None) -> tuple[int, int] | None:
    """First edge SSSE would delete from the subtree on ``nodes``, or None."""
    adj = _adjacency(tree)
    sub = _restrict(adj, range(len(adj)) if nodes is None else nodes)
    return _split_edge(sub, _mean_distance(sub) if dbar is None else dbar)


def ssse(tree, nodes: Iterable[int] | None = None, dbar: float | None = None) -> list[tuple[int, ...]]:
    """Split a tree (or the connected subtree on ``nodes``) into connected pieces.

    ``dbar`` defaults to the average pairwise distance of the input subtree and
    stays fixed while recursing.  A piece is split while its longest path ``P``
    is longer than ``dbar`` and ``s_P`` has a local minimum on the interior of
    ``P``.  A local minimum is a run of equal values with strictly larger values
    on both sides; the first one in path order (from the smaller-id end) is
    used, and the edge from its first node to the next node on ``P`` is deleted.
    Pieces are returned sorted.
    """
    adj = _adjacency(tree)
    start = sorted(range(len(adj)) if nodes is None else {int(v) for v in nodes})
    if not start:
        return []
    work = [start]
    done = []
    if dbar is None:
        dbar = _mean_distance(_restrict(adj, start))
    while work:
        piece = work.pop()
        sub = _restrict(adj, piece)
        if len(_bfs(sub, [piece[0]])[0]) != len(piece):
            raise ValueError("SSSE needs a connected subtree")
        edge = _split_edge(sub, dbar)
        if edge is None:
            done.append(tuple(piece))
            continue
        w, w2 = edge
        sub[w].remove(w2)
        sub[w2].remove(w)
        left = sorted(_bfs(sub, [w])[0])
        right = sorted(set(piece) - set(left))
        work.extend([right, left])
    return sorted(done)


# -- SCCE -----------------------------------------------------------------------


@dataclass(frozen=True)
class Cluster:
    """One SCCE sub-problem: candidate nodes and the observations assigned to them."""

    anchor: int
    candidates: tuple[int, ...]
    observed: tuple[int, ...]


@dataclass(frozen=True)
class ClusterEstimate:
    cluster: Cluster
    source: int
    estimate: SingleSourceEstimate | None = field(repr=False)  # None when the fallback was used

    def to_dict(self) -> dict:
        return {
            "anchor": self.cluster.anchor,
            "candidates_size": len(self.cluster.candidates),
            "observations_size": len(self.cluster.observed),
            "source": self.source,
            "estimate": None if self.estimate is None else self.estimate.to_dict(),
        }


@dataclass(frozen=True)
class MultiSourceEstimate:
    clusters: list[ClusterEstimate]

    @property
    def L(self) -> int:
        return len(self.clusters)

    @property
    def sources(self) -> list[int]:
        return [c.source for c in self.clusters]

    def to_dict(self) -> dict:
        return {"clusters": [c.to_dict() for c in self.clusters], "L": self.L}


def _span(tree: SpanningTree, nodes: Iterable[int]) -> list[int]:
    """Minimal subtree containing ``nodes`` and the root."""
    keep = {tree.root}
    for v in nodes:
        while v not in keep:
            keep.add(v)
            v = int(tree.parent[v])
    return sorted(keep)


def partition(g: Graph, obs: Observations, max_sources: int | None = None) -> list[Cluster]:
    """MSR on per-anchor BFS trees followed by SSSE on each cluster's spanning subtree.

    Each SSSE piece becomes a cluster whose candidates are the piece's nodes and
    whose observations are the piece's members of the anchor's observation
    cluster.  Pieces with no new observation (all already assigned to an
    earlier cluster) are skipped.  With ``max_sources`` set, pieces beyond the
    cap are merged into the last allowed cluster.
    """
    obs.validate_against(g)
    if len(obs) == 0:
        raise EstimationError("no observations")
    if len(np.unique(obs.times)) != len(obs):
        logger.warning("tied timestamps: ties are ordered by node id")
    trees = {}

    def tree_for(xi):
        trees[xi] = bfs_tree(g, xi, ASCENDING)
        return trees[xi]

    covering, _ = _msr(tree_for, obs, max_sources)
    out = []
    covered: set[int] = set()
    for c in covering:
        tree = trees[c.anchor]
        if any(tree.depth[v] < 0 for v in c.observed):
            raise EstimationError(f"observed nodes not connected to anchor {c.anchor}")
        span = _span(tree, set(c.observed) | set(c.candidates))
        members = set(c.observed)
        for piece in ssse(tree, span):
            seen = tuple(v for v in piece if v in members)
            if seen and not covered.issuperset(seen):
                out.append(Cluster(c.anchor, piece, seen))
                covered.update(seen)
    if max_sources is not None and len(out) > max_sources:
        # the cap bounds the final cluster count: overflow pieces merge into the last kept one
        keep, rest = out[: max_sources - 1], out[max_sources - 1:]
        merged = Cluster(rest[0].anchor,
                         tuple(sorted({v for c in rest for v in c.candidates})),
                         tuple(sorted({v for c in rest for v in c.observed})))
        out = keep + [merged]
    return out


def _fallback(cluster: Cluster, obs: Observations) -> int:
    if cluster.anchor in cluster.candidates:
        return cluster.anchor
    return obs.subset(cluster.observed).earliest()


def scce(g: Graph, obs: Observations, max_sources: int | None = None, target_kind: str = SCALED_IDENTITY) -> MultiSourceEstimate:
    """Estimate one source per cluster with GSSI restricted to the cluster's candidates.

    Clusters with fewer than three observations or no unobserved candidate
    report the anchor when it lies in the cluster, else its earliest observation.
    A cluster whose estimate repeats an earlier cluster's is dropped.
    """
    check_target_kind(target_kind)
    observed = set(obs.nodes.tolist())
    results = []
    chosen: set[int] = set()
    for cluster in partition(g, obs, max_sources):
        cands = [v for v in cluster.candidates if v not in observed]
        est = None
        if len(cluster.observed) >= 3 and cands:
            try:
                est = gssi(g, obs.subset(cluster.observed), target_kind, cands)
            except EstimationError:
                est = None
        source = est.source if est is not None else _fallback(cluster, obs)
        if source in chosen:
            logger.debug("cluster anchored at %d repeats source %d; merged", cluster.anchor, source)
            continue
        chosen.add(source)
        results.append(ClusterEstimate(cluster, source, est))
    return MultiSourceEstimate(results)


__all__ = [
    "Cluster",
    "ClusterEstimate",
    "MultiSourceEstimate",
    "ObservationCluster",
    "SourceCluster",
    "candidate_region",
    "first_valley",
    "leaf_sums",
    "msr",
    "nu",
    "observation_cluster",
    "partition",
    "scce",
    "ssse",
    "ssse_split",
]
