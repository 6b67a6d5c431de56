"""Gromov products and Gromov matrices of tree bases.

For a tree ``T`` rooted at ``s`` the Gromov product ``(u, v)_s`` is the depth of
the lowest common ancestor of ``u`` and ``v``.  The matrix of these products over
an ordered observed set ``U`` (with ``s`` not in ``U``) determines the base
``(T, s, U)`` up to isometry; ``reconstruct_base`` builds one such base.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import sparse

from .graph import Graph, GraphError, SpanningTree, bfs_tree
from .validation import check_square, check_unit_interval

SCALED_IDENTITY = "scaled-identity"
DIAG = "diag"
TARGET_KINDS = (SCALED_IDENTITY, DIAG)


class GromovError(ValueError):
    pass


@dataclass(frozen=True)
class GromovBase:
    """A tree, a base vertex and an ordered list of distinct observed nodes."""

    tree: Graph
    base: int
    observed: tuple[int, ...]

    def rooted(self) -> SpanningTree:
        return bfs_tree(self.tree, self.base)


def ancestor_table(tree: SpanningTree, nodes: Sequence[int]) -> np.ndarray:
    """Row i lists the ancestors of ``nodes[i]`` at depths 1..max depth.

    Slots deeper than the node itself hold the negative sentinel ``-1 - i``.
    """
    nodes = np.asarray(nodes, dtype=np.int64)
    depth = tree.depth[nodes]
    if np.any(depth < 0):
        bad = int(nodes[np.argmax(depth < 0)])
        raise GromovError(f"observed node {bad} is not reachable from base {tree.root}")
    n = len(nodes)
    dmax = int(depth.max()) if n else 0
    table = np.repeat(-1 - np.arange(n, dtype=np.int64)[:, None], max(dmax, 1), axis=1)
    cur = nodes.copy()
    cur_depth = depth.copy()
    parent = tree.parent
    for level in range(dmax, 0, -1):
        at = cur_depth == level
        table[at, level - 1] = cur[at]
        cur[at] = parent[cur[at]]
        cur_depth[at] -= 1
    return table


def gromov_products(tree: SpanningTree, observed: Sequence[int]) -> np.ndarray:
    """Integer matrix of Gromov products w.r.t. ``tree.root`` (LCA depths)."""
    observed = [int(v) for v in observed]
    if len(set(observed)) != len(observed):
        raise GromovError("observed nodes must be distinct")
    if tree.root in observed:
        raise GromovError(f"base vertex {tree.root} must not be observed")
    table = ancestor_table(tree, observed)
    # A[i, w] = 1 iff w is a non-root ancestor of observed[i] (or the node itself);
    # shared ancestors of u and v are exactly the path to their LCA, so A A' is the product
    rows, cols = np.nonzero(table >= 0)
    a = sparse.csr_matrix(
        (np.ones(len(rows), dtype=np.int64), (rows, table[rows, cols])),
        shape=(len(observed), len(tree.parent)),
    )
    return (a @ a.T).toarray()


def gromov_matrix(tree, observed: Sequence[int] | None = None, base: int | None = None) -> np.ndarray:
    """Gromov matrix of the base ``(tree, base, observed)``.

    ``tree`` is a ``GromovBase``, a ``SpanningTree`` (its root is the base
    vertex) or a ``Graph`` that is a tree, in which case ``base`` is required.
    """
    if isinstance(tree, GromovBase):
        return gromov_matrix(tree.tree, tree.observed, tree.base)
    if observed is None:
        raise GromovError("observed nodes required")
    if isinstance(tree, Graph):
        if base is None:
            raise GromovError("base vertex required when passing a Graph")
        if tree.edge_count != tree.node_count - 1:
            raise GromovError("base graph is not a tree")
        tree = bfs_tree(tree, base)
    elif base is not None and base != tree.root:
        raise GromovError(f"spanning tree is rooted at {tree.root}, not {base}")
    return gromov_products(tree, observed).astype(np.float64)


def reconstruct_base(m) -> GromovBase:
    """Build a tree base whose Gromov matrix is exactly ``m``.

    Node 0 is the base vertex.  Observed node k hangs off the path to the
    earlier observed node j maximising ``m[j, k]`` (smallest j on ties), at
    depth ``m[j, k]``, by a fresh path of length ``m[k, k] - m[j, k]``.
    """
    m = check_square("Gromov matrix", m)
    n = m.shape[0]
    if n == 0:
        raise GromovError("empty Gromov matrix")
    mi = np.rint(m).astype(np.int64)
    if not np.array_equal(mi, m):
        raise GromovError("Gromov matrix of an unweighted tree must have integer entries")
    if not np.array_equal(mi, mi.T):
        i, j = np.argwhere(mi != mi.T)[0]
        raise GromovError(f"matrix not symmetric at entry ({i}, {j})")
    if np.any(mi < 0):
        i, j = np.argwhere(mi < 0)[0]
        raise GromovError(f"negative entry at ({i}, {j})")

    parent = [-1]
    depth = [0]

    def grow(start: int, length: int) -> int:
        v = start
        for _ in range(length):
            parent.append(v)
            depth.append(depth[v] + 1)
            v = len(parent) - 1
        return v

    def ancestor_at(v: int, d: int) -> int:
        while depth[v] > d:
            v = parent[v]
        return v

    observed: list[int] = []
    for k in range(n):
        if k == 0:
            attach, shared = 0, 0
        else:
            col = mi[:k, k]
            j = int(np.argmax(col))
            shared = int(col[j])
            if shared > mi[j, j] or shared > mi[k, k]:
                raise GromovError(f"entry ({j}, {k}) exceeds a diagonal entry")
            attach = ancestor_at(observed[j], shared)
        u = grow(attach, int(mi[k, k]) - shared)
        if u == 0:
            raise GromovError(f"observed node {k} would coincide with the base vertex (entry ({k}, {k}))")
        if u in observed:
            raise GromovError(f"observed nodes {observed.index(u)} and {k} would coincide (entry ({k}, {k}))")
        observed.append(u)

    tree = Graph(len(parent), [(p, v) for v, p in enumerate(parent) if p >= 0])
    base = GromovBase(tree, 0, tuple(observed))
    back = gromov_products(bfs_tree(tree, 0), observed)
    if not np.array_equal(back, mi):
        i, j = np.argwhere(back != mi)[0]
        raise GromovError(f"inconsistent Gromov matrix at entry ({i}, {j}): got {mi[i, j]}, tree gives {back[i, j]}")
    return base


def convex_combination(a, b, theta: float) -> np.ndarray:
    """``theta * a + (1 - theta) * b``."""
    a = check_square("a", a)
    b = check_square("b", b)
    if a.shape != b.shape:
        raise GromovError(f"dimension mismatch: {a.shape} vs {b.shape}")
    theta = check_unit_interval("theta", theta)
    return theta * a + (1.0 - theta) * b


def target_matrix(m, kind: str = SCALED_IDENTITY) -> np.ndarray:
    """Diagonal shrinkage target with the same trace as ``m``."""
    m = check_square("m", m)
    if kind == SCALED_IDENTITY:
        return np.eye(m.shape[0]) * (np.trace(m) / m.shape[0])
    if kind == DIAG:
        return np.diag(np.diag(m))
    raise ValueError(f"unknown target kind {kind!r}; choose from {TARGET_KINDS}")


def check_target_kind(kind: str) -> str:
    if kind not in TARGET_KINDS:
        raise ValueError(f"unknown target kind {kind!r}; choose from {TARGET_KINDS}")
    return kind


__all__ = [
    "GromovBase",
    "GromovError",
    "GraphError",
    "ancestor_table",
    "convex_combination",
    "gromov_matrix",
    "gromov_products",
    "reconstruct_base",
    "target_matrix",
]
