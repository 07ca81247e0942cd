import math
from itertools import combinations
from pathlib import Path

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bisonet.bisociation import RankedTopicList
from bisonet.graph import (
    BisoNet,
    BisoNetNode,
    GraphError,
    export,
    from_json,
    generate_bisonet,
    largest_connected_component,
    prune_top_fraction,
    to_dot,
    to_graphml,
    to_json,
    topic_bison_measure,
)

GOLDEN = Path(__file__).parent / "golden"


def brute_measure(X, R, p, q, k):
    total = 0.0
    for i in R:
        a, b = X[i][p], X[i][q]
        total += (a * b) ** (1.0 / k) * (1.0 - abs(math.atan(a) - math.atan(b)) / math.atan(1.0))
    return total


class UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, a):
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def random_graph(rng, n_nodes, n_edges, n_domains=3):
    nodes = sorted(
        {(int(rng.integers(n_domains)), int(t)) for t in range(n_nodes)}, key=lambda dt: f"{dt[0]}_{dt[1]}"
    )
    nodes = tuple(BisoNetNode(d, t, 0.0) for d, t in nodes)
    pairs = list(combinations(range(len(nodes)), 2))
    pick = rng.choice(len(pairs), size=min(n_edges, len(pairs)), replace=False)
    ei = np.array(sorted(pairs[i] for i in pick), dtype=np.int64).reshape(-1, 2)
    return BisoNet(nodes=nodes, edge_index=ei, weights=rng.random(ei.shape[0]))


def one_node_graph():
    node = BisoNetNode(domain=1, topic=4, score=0.25, words=("solar", "wind"), domain_name="energy")
    return BisoNet(nodes=(node,), parameters={"k": 0.5})


def test_measure_zero_topic():
    X = np.array([[0.0, 1.0], [0.0, 1.0]])
    assert topic_bison_measure(X, [0, 1], 0, 1) == 0.0


def test_measure_equal_proportions():
    X = np.array([[0.3, 0.3, 0.4]])
    assert topic_bison_measure(X, [0], 0, 1, k=1) == pytest.approx(0.09, abs=1e-15)


def test_measure_closed_form():
    X = np.array([[1.0, 0.5]])
    expected = 0.25 * (math.atan(0.5) / math.atan(1.0))
    assert topic_bison_measure(X, [0], 0, 1, k=0.5) == pytest.approx(expected, abs=1e-15)


def test_measure_literal_root_is_asymmetric():
    X = np.array([[0.81, 0.25]])
    a = topic_bison_measure(X, [0], 0, 1, k=2, literal_root=True)
    b = topic_bison_measure(X, [0], 1, 0, k=2, literal_root=True)
    sim = 1 - abs(math.atan(0.81) - math.atan(0.25)) / math.atan(1)
    assert a == pytest.approx(0.9 * 0.25 * sim, abs=1e-15)
    assert b == pytest.approx(0.5 * 0.81 * sim, abs=1e-15)


def test_measure_errors():
    X = np.array([[0.5, 0.5]])
    with pytest.raises(GraphError):
        topic_bison_measure(X, [0], 0, 1, k=0)
    with pytest.raises(IndexError):
        topic_bison_measure(X, [0], 0, 2)
    with pytest.raises(GraphError):
        topic_bison_measure(X, [], 0, 1)


@given(
    st.integers(1, 6), st.integers(2, 5), st.sampled_from([0.5, 1.0, 2.0]), st.integers(0, 2**31 - 1)
)
@settings(max_examples=100, deadline=None)
def test_measure_properties(n, T, k, seed):
    rng = np.random.default_rng(seed)
    X = rng.dirichlet(np.ones(T), size=n)
    p, q = rng.choice(T, size=2, replace=False)
    R = np.arange(n)
    w = topic_bison_measure(X, R, p, q, k)
    assert w == topic_bison_measure(X, R, q, p, k)
    assert w == pytest.approx(brute_measure(X, R, p, q, k), abs=1e-12)
    if k <= 1:
        assert 0 <= w <= n
    # a document with zero proportion in both topics adds nothing
    row = np.zeros(T)
    other = [t for t in range(T) if t not in (p, q)]
    if other:
        row[other[0]] = 1.0
        X2 = np.vstack([X, row])
        assert topic_bison_measure(X2, np.arange(n + 1), p, q, k) == w


def ranked(domain, scores):
    return RankedTopicList.from_scores(domain, scores)


def test_generate_brute_force_six_nodes():
    X = np.array([
        [0.6, 0.3, 0.1],
        [0.2, 0.5, 0.3],
        [0.1, 0.1, 0.8],
        [0.4, 0.4, 0.2],
        [0.0, 0.7, 0.3],
    ])
    labels = np.array([0, 0, 1, 1, 1])
    lists = [ranked(0, [0.3, 0.2, 0.1]), ranked(1, [0.1, 0.5, 0.4])]
    g = generate_bisonet(lists, X, labels, top_k=None, k=0.5)
    assert g.labels == ["0_0", "0_1", "0_2", "1_0", "1_1", "1_2"]
    assert g.n_edges == 15
    docs = {0: [0, 1], 1: [2, 3, 4]}
    for e in g.edges():
        du, tu = map(int, e.u.split("_"))
        dv, tv = map(int, e.v.split("_"))
        R = sorted(set(docs[du]) | set(docs[dv]))
        assert e.weight == pytest.approx(brute_measure(X, R, tu, tv, 0.5), abs=1e-12)


def test_generate_cross_domain_only():
    X = np.random.default_rng(0).dirichlet(np.ones(3), size=6)
    labels = np.array([0, 0, 0, 1, 1, 1])
    lists = [ranked(0, [0.3, 0.2, 0.1]), ranked(1, [0.1, 0.5, 0.4])]
    g = generate_bisonet(lists, X, labels, top_k=None, cross_domain_only=True)
    assert g.n_edges == 9
    assert all(e.u[0] != e.v[0] for e in g.edges())


def test_generate_single_node():
    X = np.full((4, 2), 0.5)
    lists = [ranked(0, [0.9, 0.1]), ranked(1, [0.2, 0.1])]
    g = generate_bisonet(lists, X, [0, 0, 1, 1], tau=0.5)
    assert g.labels == ["0_0"] and g.n_edges == 0


def test_generate_empty_raises():
    X = np.full((4, 2), 0.5)
    lists = [ranked(0, [0.1, 0.1]), ranked(1, [0.2, 0.1])]
    with pytest.raises(GraphError, match="lower tau"):
        generate_bisonet(lists, X, [0, 0, 1, 1], tau=0.5)


def test_generate_missing_domain():
    with pytest.raises(GraphError):
        generate_bisonet([ranked(0, [0.1, 0.1])], np.full((2, 2), 0.5), [0, 1], domains=[0, 1])


def test_generate_epsilon_and_fraction():
    X = np.random.default_rng(1).dirichlet(np.ones(4), size=10)
    labels = np.repeat([0, 1], 5)
    lists = [ranked(0, [0.4, 0.3, 0.2, 0.1]), ranked(1, [0.1, 0.2, 0.3, 0.4])]
    full = generate_bisonet(lists, X, labels, top_k=None)
    eps = float(np.median(full.weights))
    g = generate_bisonet(lists, X, labels, top_k=None, epsilon=eps)
    assert np.all(g.weights >= eps) and g.n_edges == np.sum(full.weights >= eps)
    h = generate_bisonet(lists, X, labels, top_k=None, edge_fraction=0.1)
    assert h.n_edges == math.ceil(0.1 * full.n_edges)


def test_prune_identity():
    g = random_graph(np.random.default_rng(0), 20, 60)
    assert prune_top_fraction(g, 1.0).to_dict()["edges"] == g.to_dict()["edges"]


def test_prune_two_hundred_edges():
    g = random_graph(np.random.default_rng(1), 40, 200)
    assert g.n_edges == 200
    p = prune_top_fraction(g, 0.005)
    assert p.n_edges == 1 and p.weights[0] == g.weights.max()


def test_prune_matches_sort_oracle():
    g = random_graph(np.random.default_rng(2), 60, 1000)
    p = prune_top_fraction(g, 0.01)
    edges = sorted(g.edges(), key=lambda e: (-e.weight, e.u, e.v))[: math.ceil(0.01 * 1000)]
    assert sorted((e.u, e.v) for e in p.edges()) == sorted((e.u, e.v) for e in edges)
    assert len(p.nodes) == len(g.nodes)


def test_prune_ties_by_pair_label():
    nodes = tuple(BisoNetNode(0, t, 0.0) for t in range(4))
    ei = np.array([[0, 1], [0, 2], [1, 3], [2, 3]])
    g = BisoNet(nodes=nodes, edge_index=ei, weights=np.array([0.5, 0.5, 0.9, 0.5]))
    p = prune_top_fraction(g, 0.5)
    assert [(e.u, e.v) for e in p.edges()] == [("0_0", "0_1"), ("0_1", "0_3")]


def test_prune_monotone():
    g = random_graph(np.random.default_rng(3), 30, 100)
    prev = None
    for f in (0.01, 0.05, 0.2, 0.5, 1.0):
        cur = {(e.u, e.v) for e in prune_top_fraction(g, f).edges()}
        assert prev is None or prev <= cur
        prev = cur


def test_prune_bad_fraction():
    with pytest.raises(GraphError):
        prune_top_fraction(random_graph(np.random.default_rng(0), 5, 3), 0.0)


def test_lcc_connected_identity():
    nodes = tuple(BisoNetNode(0, t, 0.0) for t in range(3))
    g = BisoNet(nodes=nodes, edge_index=[[0, 1], [1, 2]], weights=[1.0, 2.0])
    assert largest_connected_component(g).to_dict()["edges"] == g.to_dict()["edges"]


def test_lcc_three_and_two():
    nodes = tuple(BisoNetNode(0, t, 0.0) for t in range(5))
    g = BisoNet(nodes=nodes, edge_index=[[0, 1], [2, 3], [3, 4]], weights=[1.0, 1.0, 1.0])
    c = largest_connected_component(g)
    assert c.labels == ["0_2", "0_3", "0_4"] and c.n_edges == 2


def test_lcc_tie_smallest_label():
    nodes = tuple(BisoNetNode(0, t, 0.0) for t in range(4))
    g = BisoNet(nodes=nodes, edge_index=[[0, 3], [1, 2]], weights=[1.0, 1.0])
    assert largest_connected_component(g).labels == ["0_0", "0_3"]


def test_lcc_empty():
    g = BisoNet(nodes=())
    assert largest_connected_component(g).labels == []


def union_find_component(g):
    uf = UnionFind(len(g.nodes))
    for i, j in g.edge_index:
        uf.union(int(i), int(j))
    groups = {}
    for i in range(len(g.nodes)):
        groups.setdefault(uf.find(i), []).append(i)
    best = max(groups.values(), key=lambda m: (len(m), -min(m)))
    return [g.nodes[i].label for i in sorted(best)]


def test_lcc_matches_union_find_random():
    rng = np.random.default_rng(4)
    for _ in range(20):
        g = random_graph(rng, 50, int(rng.integers(10, 60)))
        assert largest_connected_component(g).labels == union_find_component(g)


def test_golden_exports():
    g = one_node_graph()
    assert to_dot(g) == (GOLDEN / "one_node.dot").read_text()
    assert to_graphml(g) == (GOLDEN / "one_node.graphml").read_text()
    assert to_json(g) == (GOLDEN / "one_node.json").read_text()


def test_json_round_trip():
    g = random_graph(np.random.default_rng(5), 15, 30)
    assert from_json(to_json(g)) == g


def test_json_version_checked():
    with pytest.raises(GraphError, match="version"):
        from_json('{"version": 99, "nodes": [], "edges": []}')


def test_export_files(tmp_path):
    g = random_graph(np.random.default_rng(6), 10, 12)
    for fmt in ("dot", "graphml", "json"):
        a = export(g, tmp_path / f"a.{fmt}").read_bytes()
        b = export(g, tmp_path / f"b.{fmt}").read_bytes()
        assert a == b
    with pytest.raises(GraphError):
        export(g, tmp_path / "g.png")
    with pytest.raises(OSError):
        export(g, tmp_path / "missing" / "g.json")


def test_twenty_node_graph_parses():
    # 2 domains x 10 topics, the same ten topics in both
    rng = np.random.default_rng(7)
    X = rng.dirichlet(np.ones(10), size=40)
    labels = np.repeat([0, 1], 20)
    lists = [ranked(d, rng.random(10)) for d in (0, 1)]
    words = [[f"w{t}a", f"w{t}b"] for t in range(10)]
    g = generate_bisonet(lists, X, labels, top_k=10, topic_words=words, domain_names=["six", "nine"])
    assert len(g.nodes) == 20 and len({n.topic for n in g.nodes}) == 10
    G = nx.parse_graphml(to_graphml(g))
    assert G.number_of_nodes() == 20 and G.number_of_edges() == g.n_edges == 190
    assert G.nodes["0_3"]["words"] == "w3a w3b"
    assert G.nodes["1_3"]["domain_name"] == "nine"
    e = next(g.edges())
    assert G.edges[e.u, e.v]["weight"] == pytest.approx(e.weight, rel=0, abs=0)
    dot = to_dot(g)
    assert dot.startswith("graph bisonet {") and dot.count(" -- ") == 190


def test_graph_validation():
    nodes = (BisoNetNode(0, 1, 0.0), BisoNetNode(0, 0, 0.0))
    with pytest.raises(GraphError, match="sorted"):
        BisoNet(nodes=nodes)
    nodes = (BisoNetNode(0, 0, 0.0), BisoNetNode(0, 1, 0.0))
    with pytest.raises(GraphError):
        BisoNet(nodes=nodes, edge_index=[[1, 0]], weights=[1.0])
    with pytest.raises(GraphError):
        BisoNet(nodes=nodes, edge_index=[[0, 1]], weights=[-1.0])
