import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from infsource.graph import (
    ASCENDING,
    DESCENDING,
    Graph,
    GraphError,
    all_pairs_distances,
    bfs_tree,
    gen_ba_graph,
    gen_ba_tree,
    gen_er_graph,
    gen_er_tree,
    generate,
    graph_stats,
    load_edge_list,
    load_id_map,
    save_edge_list,
    save_id_map,
    shortest_distances,
)

from oracles import bfs_dist, random_tree


def test_bfs_triangle_ascending():
    t = bfs_tree(Graph(3, [(0, 1), (1, 2), (0, 2)]), 0, ASCENDING)
    assert t.parent[1] == 0 and t.parent[2] == 0


@pytest.mark.parametrize("direction", [ASCENDING, DESCENDING])
def test_bfs_path_either_direction(direction):
    t = bfs_tree(Graph(3, [(0, 1), (1, 2)]), 0, direction)
    assert t.parent.tolist() == [-1, 0, 1]
    assert t.depth.tolist() == [0, 1, 2]


def test_bfs_four_cycle_direction_matters():
    g = Graph(4, [(0, 1), (1, 2), (2, 3), (3, 0)])
    assert bfs_tree(g, 0, ASCENDING).parent[2] == 1
    assert bfs_tree(g, 0, DESCENDING).parent[2] == 3


def test_bfs_rejects_unknown_direction():
    with pytest.raises(ValueError):
        bfs_tree(Graph(2, [(0, 1)]), 0, "sideways")


def test_shortest_distances_examples():
    assert shortest_distances(Graph(3, [(0, 1), (1, 2)]), 0).tolist() == [0, 1, 2]
    star = Graph(5, [(0, i) for i in range(1, 5)])
    assert shortest_distances(star, 1).tolist() == [1, 0, 2, 2, 2]
    pair = Graph(4, [(0, 1), (2, 3)])
    assert shortest_distances(pair, 0).tolist() == [0, 1, -1, -1]
    assert not pair.is_connected()


def test_graph_stats_examples():
    st3 = graph_stats(Graph(3, [(0, 1), (1, 2)]))
    assert st3.diameter == 2
    assert st3.avg_pairwise_distance == pytest.approx(4 / 3)
    k4 = graph_stats(Graph(4, [(i, j) for i in range(4) for j in range(i + 1, 4)]))
    assert (k4.diameter, k4.avg_pairwise_distance, k4.edge_node_ratio) == (1, 1.0, 1.5)


def test_graph_rejects_bad_edges():
    with pytest.raises(GraphError):
        Graph(2, [(0, 2)])
    with pytest.raises(GraphError):
        Graph(2, [(1, 1)])
    with pytest.raises(GraphError):
        Graph(0)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(2, 40), seed=st.integers(0, 2**32 - 1), extra=st.integers(0, 30))
def test_bfs_depth_equals_hop_distance(n, seed, extra):
    rng = np.random.default_rng(seed)
    edges = random_tree(n, rng).edges()
    edges += [tuple(rng.choice(n, 2, replace=False)) for _ in range(extra)]
    g = Graph(n, edges)
    root = int(rng.integers(n))
    oracle = bfs_dist(g, root)
    for direction in (ASCENDING, DESCENDING):
        t = bfs_tree(g, root, direction)
        assert t.depth.tolist() == oracle
        for v in range(n):
            if v != root:
                assert g.has_edge(v, int(t.parent[v]))
                assert t.depth[t.parent[v]] == t.depth[v] - 1
    assert all_pairs_distances(g)[root].tolist() == oracle


def test_er_tree_small_cases():
    assert gen_er_tree(1, 0).node_count == 1
    assert gen_er_tree(2, 0).edges() == [(0, 1)]


def test_er_tree_seeded_is_deterministic():
    a, b = gen_er_tree(500, 7), gen_er_tree(500, 7)
    assert a == b
    assert a.edge_count == 499 and a.is_tree()


def test_ba_tree_third_node_is_symmetric():
    hits = sum(gen_ba_tree(3, s).has_edge(0, 2) for s in range(2000))
    assert abs(hits / 2000 - 0.5) < 0.05


def test_ba_tree_heavier_tailed_than_er_tree():
    ba = np.mean([gen_ba_tree(10000, s).degrees().max() for s in range(50)])
    er = np.mean([gen_er_tree(10000, s).degrees().max() for s in range(50)])
    assert ba > 2 * er


def test_er_graph_edge_ratio():
    g = gen_er_graph(500, 16, 3)
    assert g.is_connected()
    assert 7.2 <= g.edge_count / g.node_count <= 8.8


def test_ba_graph_edge_ratio():
    g = gen_ba_graph(500, 16, 3)
    assert g.is_connected()
    assert abs(g.edge_count / g.node_count - 7.88) < 0.1


def test_generate_rejects_zero_degree():
    with pytest.raises(ValueError):
        generate("er", 50, 0, 0)
    with pytest.raises(ValueError):
        generate("ba", 50, 0, 0)


def test_load_edge_list_path(tmp_path):
    p = tmp_path / "g.txt"
    p.write_text("0 1\n1 2\n")
    g, report = load_edge_list(p)
    assert g == Graph(3, [(0, 1), (1, 2)])
    assert report.duplicates == 0


def test_load_edge_list_counts_duplicates(tmp_path):
    p = tmp_path / "g.txt"
    p.write_text("# comment\n0 1\n1 0\n2 2\n")
    g, report = load_edge_list(p)
    assert g.edge_count == 1
    assert report.duplicates == 1 and report.self_loops == 1


def test_load_edge_list_compacts_labels(tmp_path):
    p = tmp_path / "g.txt"
    p.write_text("10 30\n30 20\n")
    g, report = load_edge_list(p)
    assert report.labels == [10, 20, 30]
    assert g.edges() == [(0, 2), (1, 2)]
    save_id_map(report.labels, tmp_path / "ids.txt")
    assert load_id_map(tmp_path / "ids.txt") == [10, 20, 30]


def test_load_edge_list_malformed(tmp_path):
    p = tmp_path / "g.txt"
    p.write_text("0 1 2\n")
    with pytest.raises(GraphError, match=":1:"):
        load_edge_list(p)


@settings(max_examples=30, deadline=None)
@given(n=st.integers(1, 30), seed=st.integers(0, 2**32 - 1))
def test_edge_list_round_trip(tmp_path_factory, n, seed):
    rng = np.random.default_rng(seed)
    g = Graph(n, [tuple(rng.choice(n, 2, replace=False)) for _ in range(n)] if n > 1 else [])
    path = tmp_path_factory.mktemp("rt") / "g.txt"
    save_edge_list(g, path)
    h, report = load_edge_list(path)
    assert h == g
    assert report.labels == list(range(n))
