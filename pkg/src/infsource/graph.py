"""Undirected graphs, BFS spanning trees, distances, random generators and edge-list I/O."""

from __future__ import annotations

import logging
from bisect import bisect_left
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

from ._io import atomic_write
from .validation import check_rng

logger = logging.getLogger(__name__)

ASCENDING = "ascending"
DESCENDING = "descending"

UNREACHABLE = -1


class GraphError(ValueError):
    pass


class Graph:
    """Immutable undirected simple graph on nodes ``0..n-1``.

    Adjacency lists are kept strictly ascending; BFS tie-breaking depends on it.
    """

    __slots__ = ("_adj", "_radj", "_n_edges")

    def __init__(self, node_count: int, edges: Iterable[tuple[int, int]] = ()):
        if node_count < 1:
            raise GraphError("graph needs at least one node")
        nbrs: list[set[int]] = [set() for _ in range(node_count)]
        for u, v in edges:
            u, v = int(u), int(v)
            if not (0 <= u < node_count and 0 <= v < node_count):
                raise GraphError(f"edge ({u}, {v}) out of range for {node_count} nodes")
            if u == v:
                raise GraphError(f"self-loop on node {u}")
            nbrs[u].add(v)
            nbrs[v].add(u)
        self._adj = tuple(tuple(sorted(s)) for s in nbrs)
        self._radj = tuple(a[::-1] for a in self._adj)
        self._n_edges = sum(len(a) for a in self._adj) // 2

    @classmethod
    def from_adjacency(cls, adjacency: Sequence[Sequence[int]]) -> "Graph":
        edges = [(u, v) for u, a in enumerate(adjacency) for v in a if u < v]
        g = cls(len(adjacency), edges)
        for u, a in enumerate(adjacency):
            if len(set(a)) != len(g._adj[u]):
                raise GraphError(f"adjacency of node {u} is not symmetric or has duplicates")
        return g

    @property
    def node_count(self) -> int:
        return len(self._adj)

    @property
    def edge_count(self) -> int:
        return self._n_edges

    @property
    def adjacency(self) -> tuple[tuple[int, ...], ...]:
        return self._adj

    def neighbors(self, u: int) -> tuple[int, ...]:
        return self._adj[u]

    def degree(self, u: int) -> int:
        return len(self._adj[u])

    def degrees(self) -> np.ndarray:
        return np.array([len(a) for a in self._adj], dtype=np.int64)

    def edges(self) -> list[tuple[int, int]]:
        return [(u, v) for u, a in enumerate(self._adj) for v in a if u < v]

    def has_edge(self, u: int, v: int) -> bool:
        a = self._adj[u]
        i = bisect_left(a, v)
        return i < len(a) and a[i] == v

    def check_node(self, u) -> int:
        try:
            ui = int(u)
        except (TypeError, ValueError):
            raise GraphError(f"invalid node id {u!r}") from None
        if ui != u or not 0 <= ui < self.node_count:
            raise GraphError(f"node {u!r} not in graph with {self.node_count} nodes")
        return ui

    def is_connected(self) -> bool:
        return bool(np.all(shortest_distances(self, 0) >= 0))

    def is_tree(self) -> bool:
        return self._n_edges == self.node_count - 1 and self.is_connected()

    def subgraph(self, nodes: Iterable[int]) -> tuple["Graph", np.ndarray]:
        """Induced subgraph; returns it with the array mapping new ids to old ids."""
        keep = np.array(sorted(set(int(v) for v in nodes)), dtype=np.int64)
        index = {int(v): i for i, v in enumerate(keep)}
        edges = [(index[u], index[v]) for u in keep for v in self._adj[u] if u < v and v in index]
        return Graph(len(keep), edges), keep

    def to_csr(self) -> csr_matrix:
        indptr = np.zeros(self.node_count + 1, dtype=np.int64)
        indptr[1:] = np.cumsum([len(a) for a in self._adj])
        indices = np.fromiter((v for a in self._adj for v in a), dtype=np.int64, count=int(indptr[-1]))
        data = np.ones(len(indices), dtype=np.float64)
        return csr_matrix((data, indices, indptr), shape=(self.node_count, self.node_count))

    def __eq__(self, other) -> bool:
        return isinstance(other, Graph) and self._adj == other._adj

    def __hash__(self) -> int:
        return hash(self._adj)

    def __repr__(self) -> str:
        return f"Graph(nodes={self.node_count}, edges={self.edge_count})"


@dataclass(frozen=True)
class SpanningTree:
    """Rooted spanning tree of the root's component.

    ``parent[v]`` is -1 for the root and for nodes outside the component;
    ``depth[v]`` is -1 for nodes outside the component.
    """

    root: int
    parent: np.ndarray
    depth: np.ndarray

    @property
    def node_count(self) -> int:
        return len(self.parent)

    def reachable(self, v: int) -> bool:
        return self.depth[v] >= 0

    def path_to_root(self, v: int) -> list[int]:
        if self.depth[v] < 0:
            raise GraphError(f"node {v} is not spanned by the tree rooted at {self.root}")
        path = [v]
        while path[-1] != self.root:
            path.append(int(self.parent[path[-1]]))
        return path

    def to_graph(self) -> Graph:
        edges = [(int(p), v) for v, p in enumerate(self.parent) if p >= 0]
        return Graph(self.node_count, edges)


def bfs_tree(g: Graph, root: int, direction: str = ASCENDING) -> SpanningTree:
    """BFS tree from ``root``; neighbours enqueued in ascending or descending id order."""
    root = g.check_node(root)
    if direction == ASCENDING:
        adj = g._adj
    elif direction == DESCENDING:
        adj = g._radj
    else:
        raise ValueError(f"unknown BFS direction {direction!r}")
    n = g.node_count
    parent = [-1] * n
    depth = [-1] * n
    depth[root] = 0
    queue = deque([root])
    pop, push = queue.popleft, queue.append
    while queue:
        u = pop()
        du = depth[u] + 1
        for v in adj[u]:
            if depth[v] < 0:
                depth[v] = du
                parent[v] = u
                push(v)
    return SpanningTree(root, np.array(parent, dtype=np.int64), np.array(depth, dtype=np.int64))


def shortest_distances(g: Graph, source: int) -> np.ndarray:
    """Hop distances from ``source``; unreachable nodes carry ``UNREACHABLE`` (-1)."""
    source = g.check_node(source)
    dist = [-1] * g.node_count
    dist[source] = 0
    queue = deque([source])
    adj = g._adj
    while queue:
        u = queue.popleft()
        du = dist[u] + 1
        for v in adj[u]:
            if dist[v] < 0:
                dist[v] = du
                queue.append(v)
    return np.array(dist, dtype=np.int64)


def all_pairs_distances(g: Graph) -> np.ndarray:
    """Dense hop-distance matrix, -1 where unreachable."""
    d = shortest_path(g.to_csr(), method="D", directed=False, unweighted=True)
    out = np.full(d.shape, UNREACHABLE, dtype=np.int64)
    finite = np.isfinite(d)
    out[finite] = d[finite].astype(np.int64)
    return out


def farthest_node(dist: np.ndarray) -> int:
    """Node at maximal finite distance, smallest id on ties."""
    return int(np.argmax(dist))


@dataclass(frozen=True)
class GraphStats:
    edge_node_ratio: float
    diameter: int
    avg_pairwise_distance: float


def graph_stats(g: Graph) -> GraphStats:
    n = g.node_count
    if n == 1:
        return GraphStats(0.0, 0, 0.0)
    d = all_pairs_distances(g)
    if np.any(d < 0):
        raise GraphError("graph_stats requires a connected graph")
    iu = np.triu_indices(n, k=1)
    return GraphStats(g.edge_count / n, int(d.max()), float(d[iu].mean()))


# -- generators ---------------------------------------------------------------


def gen_er_tree(n: int, rng=None) -> Graph:
    """Random recursive tree: node i attaches uniformly to one of 0..i-1."""
    if n < 1:
        raise GraphError("tree needs at least one node")
    rng = check_rng(rng)
    if n == 1:
        return Graph(1)
    parents = [int(rng.integers(0, i)) for i in range(1, n)]
    return Graph(n, [(p, i) for i, p in enumerate(parents, start=1)])


def gen_ba_tree(n: int, rng=None) -> Graph:
    """Preferential-attachment tree: node i attaches to an existing node with probability proportional to its degree."""
    if n < 1:
        raise GraphError("tree needs at least one node")
    rng = check_rng(rng)
    if n == 1:
        return Graph(1)
    edges = [(0, 1)]
    # every edge endpoint listed once, so a uniform pick is degree-proportional
    ends = [0, 1]
    for i in range(2, n):
        t = ends[int(rng.integers(0, len(ends)))]
        edges.append((t, i))
        ends += (t, i)
    return Graph(n, edges)


def gen_er_graph(n: int, mean_degree: float, rng=None, max_tries: int = 100) -> Graph:
    """Connected Erdos-Renyi graph with edge probability ``mean_degree / (n - 1)``.

    The whole graph is resampled until connected, at most ``max_tries`` times.
    """
    if mean_degree <= 0:
        raise GraphError("mean_degree must be positive")
    if n < 2:
        raise GraphError("ER graph needs at least two nodes")
    p = mean_degree / (n - 1)
    if p > 1:
        raise GraphError(f"mean_degree {mean_degree} too large for {n} nodes")
    rng = check_rng(rng)
    iu, ju = np.triu_indices(n, k=1)
    for _ in range(max_tries):
        keep = rng.random(len(iu)) < p
        g = Graph(n, zip(iu[keep].tolist(), ju[keep].tolist()))
        if g.is_connected():
            return g
    raise GraphError(f"no connected ER({n}, {mean_degree}) graph after {max_tries} tries")


def gen_ba_graph(n: int, mean_degree: float, rng=None) -> Graph:
    """Barabasi-Albert graph with ``m = round(mean_degree / 2)`` edges per arriving node.

    Seeded with a star on ``m + 1`` nodes.
    """
    if mean_degree <= 0:
        raise GraphError("mean_degree must be positive")
    m = int(round(mean_degree / 2))
    if m < 1:
        raise GraphError(f"mean_degree {mean_degree} gives zero edges per node")
    if n < m + 1:
        raise GraphError(f"BA graph with m={m} needs at least {m + 1} nodes")
    rng = check_rng(rng)
    edges = [(0, i) for i in range(1, m + 1)]
    ends: list[int] = []
    for u, v in edges:
        ends += (u, v)
    for i in range(m + 1, n):
        targets: set[int] = set()
        while len(targets) < m:
            targets.add(ends[int(rng.integers(0, len(ends)))])
        for t in sorted(targets):
            edges.append((t, i))
            ends += (t, i)
    return Graph(n, edges)


GENERATORS = {
    "er-tree": lambda n, d, rng: gen_er_tree(n, rng),
    "ba-tree": lambda n, d, rng: gen_ba_tree(n, rng),
    "er": gen_er_graph,
    "ba": gen_ba_graph,
}


def generate(family: str, n: int, mean_degree: float | None = None, rng=None) -> Graph:
    try:
        gen = GENERATORS[family]
    except KeyError:
        raise GraphError(f"unknown graph family {family!r}; choose from {sorted(GENERATORS)}") from None
    if family in ("er", "ba") and mean_degree is None:
        raise GraphError(f"family {family!r} needs a mean degree")
    return gen(n, mean_degree, rng)


# -- edge-list I/O ------------------------------------------------------------


@dataclass
class EdgeListReport:
    """What ``load_edge_list`` did to the raw file."""

    labels: list = field(default_factory=list)  # internal id -> external id
    duplicates: int = 0
    self_loops: int = 0


def _parse_id(tok: str):
    try:
        return int(tok)
    except ValueError:
        return tok


def load_edge_list(path) -> tuple[Graph, EdgeListReport]:
    """Read a whitespace-separated edge list, compacting ids to ``0..n-1``.

    Lines starting with ``#`` are comments, except ``# nodes N`` which declares
    nodes 0..N-1 so isolated nodes survive a save/load round trip.
    """
    raw_edges = []
    declared: list = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.strip()
            if not s:
                continue
            if s.startswith("#"):
                parts = s[1:].split()
                if len(parts) == 2 and parts[0] == "nodes" and parts[1].isdigit():
                    declared = list(range(int(parts[1])))
                continue
            parts = s.split()
            if len(parts) != 2:
                raise GraphError(f"{path}:{lineno}: expected two node ids, got {s!r}")
            raw_edges.append((_parse_id(parts[0]), _parse_id(parts[1])))
    ids = set(declared)
    for u, v in raw_edges:
        ids.add(u)
        ids.add(v)
    if not ids:
        raise GraphError(f"{path}: no edges")
    try:
        labels = sorted(ids)
    except TypeError:
        labels = sorted(ids, key=str)
    index = {x: i for i, x in enumerate(labels)}
    report = EdgeListReport(labels=labels)
    seen = set()
    edges = []
    for u, v in raw_edges:
        if u == v:
            report.self_loops += 1
            continue
        a, b = index[u], index[v]
        key = (a, b) if a < b else (b, a)
        if key in seen:
            report.duplicates += 1
            continue
        seen.add(key)
        edges.append(key)
    if report.duplicates or report.self_loops:
        logger.info("%s: dropped %d duplicate edges and %d self-loops", path, report.duplicates, report.self_loops)
    return Graph(len(labels), edges), report


def save_edge_list(g: Graph, path) -> None:
    with atomic_write(path) as fh:
        fh.write(f"# nodes {g.node_count}\n")
        for u, v in g.edges():
            fh.write(f"{u} {v}\n")


def save_id_map(labels: Sequence, path) -> None:
    with atomic_write(path) as fh:
        for i, x in enumerate(labels):
            fh.write(f"{x} {i}\n")


def load_id_map(path) -> list:
    pairs = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            ext, internal = line.split()
            pairs.append((int(internal), _parse_id(ext)))
    pairs.sort()
    if [i for i, _ in pairs] != list(range(len(pairs))):
        raise GraphError(f"{path}: internal ids are not 0..n-1")
    return [x for _, x in pairs]
