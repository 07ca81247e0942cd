"""BisoNet construction, pruning and export.

Nodes are (domain, topic) pairs labelled ``"<domain>_<topic>"``. Node order
is the sorted label order everywhere, and an edge ``(i, j)`` always has
``i < j`` in that order, so exports are byte-stable.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape, quoteattr

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from ._validation import check_index, check_topic_matrix

__all__ = [
    "GraphError",
    "BisoNetNode",
    "BisoNetEdge",
    "BisoNet",
    "topic_bison_measure",
    "pairwise_bison_measure",
    "generate_bisonet",
    "prune_top_fraction",
    "prune_threshold",
    "largest_connected_component",
    "export",
    "to_dot",
    "to_graphml",
    "to_json",
    "from_json",
    "read_json",
    "JSON_VERSION",
]

JSON_VERSION = 1
_ATAN_1 = math.atan(1.0)


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class BisoNetNode:
    domain: int
    topic: int
    score: float
    words: tuple[str, ...] = ()
    domain_name: str = ""

    @property
    def label(self) -> str:
        return f"{self.domain}_{self.topic}"


@dataclass(frozen=True)
class BisoNetEdge:
    u: str
    v: str
    weight: float


def _check_k(k: float) -> float:
    if not k > 0:
        raise GraphError(f"root parameter k must be > 0, got {k}")
    return float(k)


def topic_bison_measure(X, R, p: int, q: int, k: float = 0.5, literal_root: bool = False) -> float:
    """Edge weight between topics ``p`` and ``q`` over the documents ``R``.

    Each document contributes a co-occurrence factor ``(x_p * x_q) ** (1/k)``
    times the proportion similarity ``1 - |atan x_p - atan x_q| / atan 1``.
    ``literal_root=True`` roots ``x_p`` alone, which is not symmetric.
    """
    k = _check_k(k)
    X = check_topic_matrix(X)
    p = check_index(p, X.shape[1], "topic p")
    q = check_index(q, X.shape[1], "topic q")
    R = np.asarray(R, dtype=np.int64)
    if R.size == 0:
        raise GraphError("document set R is empty")
    xp, xq = X[R, p], X[R, q]
    return float(np.sum(_terms(xp, xq, k, literal_root)))


def _terms(xp, xq, k, literal_root):
    if literal_root:
        co = np.power(xp, 1.0 / k) * xq
    else:
        co = np.power(xp * xq, 1.0 / k)
    sim = 1.0 - np.abs(np.arctan(xp) - np.arctan(xq)) / _ATAN_1
    return co * sim


def pairwise_bison_measure(X, R, topics_a, topics_b, k=0.5, literal_root=False) -> np.ndarray:
    """Matrix of :func:`topic_bison_measure` for every ``(a, b)`` topic pair."""
    k = _check_k(k)
    XR = np.asarray(X, dtype=np.float64)[np.asarray(R, dtype=np.int64)]
    A = XR[:, list(topics_a)]
    B = XR[:, list(topics_b)]
    out = np.empty((A.shape[1], B.shape[1]))
    for a in range(A.shape[1]):
        out[a] = _terms(A[:, a : a + 1], B, k, literal_root).sum(axis=0)
    return out


@dataclass
class BisoNet:
    nodes: tuple[BisoNetNode, ...]
    edge_index: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))
    weights: np.ndarray = field(default_factory=lambda: np.zeros(0))
    parameters: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        labels = [n.label for n in self.nodes]
        if labels != sorted(labels):
            raise GraphError("nodes must be sorted by label")
        if len(set(labels)) != len(labels):
            raise GraphError("duplicate (domain, topic) node")
        self.edge_index = np.asarray(self.edge_index, dtype=np.int64).reshape(-1, 2)
        self.weights = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        if self.edge_index.shape[0] != self.weights.shape[0]:
            raise GraphError("edge_index and weights differ in length")
        if self.edge_index.size:
            i, j = self.edge_index[:, 0], self.edge_index[:, 1]
            if np.any(i >= j) or j.max() >= len(self.nodes) or i.min() < 0:
                raise GraphError("edges must reference existing nodes with i < j")
        if self.weights.size and (not np.all(np.isfinite(self.weights)) or self.weights.min() < 0):
            raise GraphError("edge weights must be finite and nonnegative")

    @property
    def labels(self) -> list[str]:
        return [n.label for n in self.nodes]

    @property
    def n_edges(self) -> int:
        return int(self.weights.shape[0])

    def edges(self):
        for (i, j), w in zip(self.edge_index, self.weights):
            yield BisoNetEdge(self.nodes[i].label, self.nodes[j].label, float(w))

    def node(self, label: str) -> BisoNetNode:
        for n in self.nodes:
            if n.label == label:
                return n
        raise KeyError(label)

    def with_edges(self, keep: np.ndarray, **parameters) -> "BisoNet":
        keep = np.sort(np.asarray(keep, dtype=np.int64))
        return BisoNet(
            nodes=self.nodes,
            edge_index=self.edge_index[keep],
            weights=self.weights[keep],
            parameters={**self.parameters, **parameters},
            provenance=dict(self.provenance),
        )

    def to_dict(self) -> dict:
        return {
            "version": JSON_VERSION,
            "parameters": self.parameters,
            "provenance": self.provenance,
            "nodes": [
                {
                    "label": n.label,
                    "domain": n.domain,
                    "domain_name": n.domain_name,
                    "topic": n.topic,
                    "score": n.score,
                    "words": list(n.words),
                }
                for n in self.nodes
            ],
            "edges": [
                {"source": e.u, "target": e.v, "weight": e.weight} for e in self.edges()
            ],
        }

    def __eq__(self, other) -> bool:
        if not isinstance(other, BisoNet):
            return NotImplemented
        return self.to_dict() == other.to_dict()


def _sort_nodes(nodes):
    return tuple(sorted(nodes, key=lambda n: n.label))


def generate_bisonet(
    ranked_lists,
    X,
    labels,
    domains=None,
    top_k: int | None = 10,
    tau: float | None = None,
    epsilon: float | None = None,
    edge_fraction: float | None = None,
    k: float = 0.5,
    cross_domain_only: bool = False,
    literal_root: bool = False,
    topic_words=None,
    domain_names=None,
    provenance=None,
) -> BisoNet:
    """Build the BisoNet from per-domain ranked topic lists.

    A topic becomes a node of domain ``q`` if its score is at least ``tau``,
    or, when ``tau`` is ``None``, if it is among the ``top_k`` of ``q``
    (all topics when ``top_k`` is also ``None``). Every pair of distinct
    nodes gets an edge weighted over the documents of both endpoint
    domains. Edges below ``epsilon`` are dropped, then ``edge_fraction``
    keeps only the heaviest edges.
    """
    X = check_topic_matrix(X)
    labels = np.asarray(labels, dtype=np.int64)
    k = _check_k(k)
    by_domain = {r.domain: r for r in ranked_lists}
    if domains is None:
        domains = sorted(by_domain)
    missing = [d for d in domains if d not in by_domain]
    if missing:
        raise GraphError(f"no ranked topic list for domains {missing}")

    nodes = []
    for q in domains:
        ranked = by_domain[q]
        if tau is not None:
            admitted = [(t, s) for t, s in zip(ranked.topics, ranked.scores) if s >= tau]
        elif top_k is not None:
            admitted = list(zip(ranked.topics, ranked.scores))[:top_k]
        else:
            admitted = list(zip(ranked.topics, ranked.scores))
        for t, s in admitted:
            nodes.append(
                BisoNetNode(
                    domain=int(q),
                    topic=int(t),
                    score=float(s),
                    words=tuple(topic_words[t]) if topic_words is not None else (),
                    domain_name=str(domain_names[q]) if domain_names is not None else "",
                )
            )
    if not nodes:
        raise GraphError("no topic passes the bisociation threshold; lower tau")
    nodes = _sort_nodes(nodes)

    pos_by_domain: dict[int, list[int]] = {}
    for idx, n in enumerate(nodes):
        pos_by_domain.setdefault(n.domain, []).append(idx)
    docs_by_domain = {d: np.flatnonzero(labels == d) for d in pos_by_domain}

    src, dst, wts = [], [], []
    dom_list = sorted(pos_by_domain)
    for a_i, da in enumerate(dom_list):
        for db in dom_list[a_i:]:
            if cross_domain_only and da == db:
                continue
            R = np.union1d(docs_by_domain[da], docs_by_domain[db])
            if R.size == 0:
                continue
            pa, pb = pos_by_domain[da], pos_by_domain[db]
            W = pairwise_bison_measure(
                X, R, [nodes[i].topic for i in pa], [nodes[j].topic for j in pb], k, literal_root
            )
            I = np.repeat(np.asarray(pa), len(pb))
            J = np.tile(np.asarray(pb), len(pa))
            w = W.ravel()
            if da == db:
                mask = I < J
            else:
                mask = np.ones(I.shape, dtype=bool)
            lo, hi = np.minimum(I, J)[mask], np.maximum(I, J)[mask]
            src.append(lo)
            dst.append(hi)
            wts.append(w[mask])
    if src:
        i = np.concatenate(src)
        j = np.concatenate(dst)
        w = np.concatenate(wts)
        order = np.lexsort((j, i))
        edge_index, weights = np.stack([i[order], j[order]], axis=1), w[order]
    else:
        edge_index, weights = np.zeros((0, 2), dtype=np.int64), np.zeros(0)

    graph = BisoNet(
        nodes=nodes,
        edge_index=edge_index,
        weights=weights,
        parameters={
            "tau": tau,
            "top_k": top_k if tau is None else None,
            "epsilon": epsilon,
            "edge_fraction": edge_fraction,
            "k": k,
            "cross_domain_only": cross_domain_only,
            "literal_root": literal_root,
            "domains": [int(d) for d in domains],
        },
        provenance=dict(provenance or {}),
    )
    if epsilon is not None:
        graph = prune_threshold(graph, epsilon)
    if edge_fraction is not None:
        graph = prune_top_fraction(graph, edge_fraction)
    return graph


def prune_threshold(graph: BisoNet, epsilon: float) -> BisoNet:
    """Drop edges lighter than ``epsilon``."""
    return graph.with_edges(np.flatnonzero(graph.weights >= epsilon), epsilon=epsilon)


def prune_top_fraction(graph: BisoNet, fraction: float) -> BisoNet:
    """Keep the ``ceil(fraction * |E|)`` heaviest edges; nodes are kept.

    Equal weights are resolved in favour of the lexicographically smaller
    node-pair label.
    """
    if not 0 < fraction <= 1:
        raise GraphError(f"fraction must be in (0, 1], got {fraction}")
    n_edges = graph.n_edges
    n_keep = min(n_edges, math.ceil(round(fraction * n_edges, 9)))
    ei = graph.edge_index
    order = np.lexsort((ei[:, 1], ei[:, 0], -graph.weights))
    return graph.with_edges(order[:n_keep], edge_fraction=fraction)


def largest_connected_component(graph: BisoNet) -> BisoNet:
    """Subgraph induced by the largest component.

    Among equally large components the one holding the smallest node label wins.
    """
    n = len(graph.nodes)
    if n == 0:
        return graph
    ei = graph.edge_index
    adj = coo_matrix((np.ones(ei.shape[0]), (ei[:, 0], ei[:, 1])), shape=(n, n))
    _, comp = connected_components(adj, directed=False)
    sizes = np.bincount(comp)
    # node index order is label order, so the first node of a component is its smallest label
    first = np.full(sizes.size, n)
    np.minimum.at(first, comp, np.arange(n))
    best = min(range(sizes.size), key=lambda c: (-sizes[c], first[c]))
    keep = np.flatnonzero(comp == best)
    remap = np.full(n, -1)
    remap[keep] = np.arange(keep.size)
    emask = (comp[ei[:, 0]] == best) & (comp[ei[:, 1]] == best) if ei.size else np.zeros(0, bool)
    return BisoNet(
        nodes=tuple(graph.nodes[i] for i in keep),
        edge_index=remap[ei[emask]],
        weights=graph.weights[emask],
        parameters={**graph.parameters, "largest_component": True},
        provenance=dict(graph.provenance),
    )


def _num(value) -> str:
    return repr(float(value))


def to_json(graph: BisoNet) -> str:
    return json.dumps(graph.to_dict(), indent=1, sort_keys=True) + "\n"


def from_json(text: str) -> BisoNet:
    data = json.loads(text)
    if data.get("version") != JSON_VERSION:
        raise GraphError(f"unsupported BisoNet JSON version {data.get('version')}")
    nodes = tuple(
        BisoNetNode(
            domain=int(n["domain"]),
            topic=int(n["topic"]),
            score=float(n["score"]),
            words=tuple(n.get("words", ())),
            domain_name=n.get("domain_name", ""),
        )
        for n in data["nodes"]
    )
    index = {n.label: i for i, n in enumerate(nodes)}
    ei = [(index[e["source"]], index[e["target"]]) for e in data["edges"]]
    return BisoNet(
        nodes=nodes,
        edge_index=np.asarray(ei, dtype=np.int64).reshape(-1, 2),
        weights=np.asarray([e["weight"] for e in data["edges"]], dtype=np.float64),
        parameters=data.get("parameters", {}),
        provenance=data.get("provenance", {}),
    )


def read_json(path) -> BisoNet:
    return from_json(Path(path).read_text(encoding="utf-8"))


def _dot_str(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def to_dot(graph: BisoNet) -> str:
    wmax = float(graph.weights.max()) if graph.n_edges else 0.0
    lines = ["graph bisonet {"]
    for n in graph.nodes:
        lines.append(
            f"  {_dot_str(n.label)} [label={_dot_str(n.label)}, domain={n.domain}, "
            f"domain_name={_dot_str(n.domain_name)}, topic={n.topic}, score={_num(n.score)}, "
            f"words={_dot_str(' '.join(n.words))}];"
        )
    for e in graph.edges():
        pen = 0.5 + 4.5 * e.weight / wmax if wmax > 0 else 1.0
        lines.append(
            f"  {_dot_str(e.u)} -- {_dot_str(e.v)} [weight={_num(e.weight)}, penwidth={pen:.4f}];"
        )
    lines.append("}")
    return "\n".join(lines) + "\n"


_GRAPHML_KEYS = [
    ("d_label", "node", "label", "string"),
    ("d_domain", "node", "domain", "int"),
    ("d_domain_name", "node", "domain_name", "string"),
    ("d_topic", "node", "topic", "int"),
    ("d_score", "node", "score", "double"),
    ("d_words", "node", "words", "string"),
    ("d_weight", "edge", "weight", "double"),
]


def to_graphml(graph: BisoNet) -> str:
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        '<graphml xmlns="http://graphml.graphdrawing.org/xmlns">',
    ]
    for kid, target, name, typ in _GRAPHML_KEYS:
        out.append(f'  <key id="{kid}" for="{target}" attr.name="{name}" attr.type="{typ}"/>')
    out.append('  <graph id="bisonet" edgedefault="undirected">')
    for n in graph.nodes:
        out.append(f"    <node id={quoteattr(n.label)}>")
        out.append(f'      <data key="d_label">{escape(n.label)}</data>')
        out.append(f'      <data key="d_domain">{n.domain}</data>')
        out.append(f'      <data key="d_domain_name">{escape(n.domain_name)}</data>')
        out.append(f'      <data key="d_topic">{n.topic}</data>')
        out.append(f'      <data key="d_score">{_num(n.score)}</data>')
        out.append(f'      <data key="d_words">{escape(" ".join(n.words))}</data>')
        out.append("    </node>")
    for e in graph.edges():
        out.append(f"    <edge source={quoteattr(e.u)} target={quoteattr(e.v)}>")
        out.append(f'      <data key="d_weight">{_num(e.weight)}</data>')
        out.append("    </edge>")
    out.append("  </graph>")
    out.append("</graphml>")
    return "\n".join(out) + "\n"


_WRITERS = {"dot": to_dot, "graphml": to_graphml, "json": to_json}


def export(graph: BisoNet, path, format: str | None = None) -> Path:
    """Write ``graph`` as dot, graphml or json (default: from the suffix)."""
    path = Path(path)
    format = (format or path.suffix.lstrip(".")).lower()
    if format not in _WRITERS:
        raise GraphError(f"unsupported export format {format!r}; use dot, graphml or json")
    text = _WRITERS[format](graph)
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write {format} export to {path}: {exc.strerror}") from exc
    return path
