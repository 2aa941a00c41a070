"""
Vertex-cover reduction gadget: turns a small undirected graph into a
recommendation graph whose segregation values are known in closed form
"""

import itertools
import logging
from dataclasses import dataclass, field
from typing import Dict, Hashable, Iterable, List, Optional, Set, Tuple

import networkx as nx
import numpy as np

from core.graph import NodeLabel, RankDiscount, RecGraph, RelevanceStore, build_top_d_graph
from core.rewire import RewiringOp, make_op
from core.storage import read_table

logger = logging.getLogger(__name__)

GADGET_D = 2
MAX_COVER_SEARCH_NODES = 20

# closed-form segregation values of the construction
Z_HUB = 1.0
Z_VERTEX = 2.0
Z_EDGE = 3.0
Z_VERTEX_REWIRED = 1.5
Z_EDGE_ONE_COVERED = 2.75
Z_EDGE_BOTH_COVERED = 2.5


@dataclass
class Gadget:
    graph: RecGraph
    relevance: RelevanceStore
    vertex_ids: Dict[Hashable, int] = field(default_factory=dict)
    edge_ids: Dict[Tuple[Hashable, Hashable], int] = field(default_factory=dict)
    h1: int = 0
    h2: int = 0
    n1: int = 0
    n2: int = 0

    @property
    def vertex_nodes(self) -> List[int]:
        return list(self.vertex_ids.values())

    @property
    def edge_nodes(self) -> List[int]:
        return list(self.edge_ids.values())


def _ordered(nodes: Iterable[Hashable]) -> List[Hashable]:
    nodes = list(nodes)
    try:
        return sorted(nodes)
    except TypeError:
        return sorted(nodes, key=str)


def build_gadget(source: nx.Graph) -> Gadget:
    """
    Build the reduction graph from an undirected graph

    Each vertex v recommends the hubs h1 and h2, each edge node recommends its
    two endpoints, the hubs recommend the neutral pair n1 and n2. Every score is
    1.0, so the id order (vertices, edges, h1, h2, n1, n2) decides the lists and
    every vertex and edge node keeps n1 and n2 as rewiring targets.

    Args:
        source: Simple undirected graph

    Returns:
        Gadget: Graph, relevance and the id of every gadget node
    """
    if source.is_directed() or source.is_multigraph():
        raise ValueError("Gadget source must be a simple undirected graph")
    if nx.number_of_selfloops(source):
        raise ValueError("Gadget source must not contain self-loops")

    vertices = _ordered(source.nodes)
    vertex_ids = {v: i for i, v in enumerate(vertices)}
    edges = sorted(
        (tuple(sorted((a, b), key=vertex_ids.get)) for a, b in source.edges),
        key=lambda e: (vertex_ids[e[0]], vertex_ids[e[1]]),
    )
    base = len(vertices)
    edge_ids = {e: base + i for i, e in enumerate(edges)}
    h1, h2, n1, n2 = (base + len(edges) + i for i in range(4))
    n = n2 + 1

    names = [f"v:{v}" for v in vertices] + [f"e:{a}-{b}" for a, b in edges] + ["h1", "h2", "n1", "n2"]
    labels = np.full(n, NodeLabel.HARMFUL, dtype=np.int8)
    labels[[n1, n2]] = NodeLabel.NEUTRAL

    triples: List[Tuple[int, int]] = []
    for v in vertices:
        triples += [(vertex_ids[v], t) for t in (h1, h2, n1, n2)]
    for (a, b), e in edge_ids.items():
        triples += [(e, t) for t in (vertex_ids[a], vertex_ids[b], n1, n2)]
    triples += [(h1, n1), (h1, n2), (h2, n1), (h2, n2)]
    triples += [(n1, n2), (n1, h1), (n2, n1), (n2, h1)]

    src, dst = zip(*triples)
    relevance = RelevanceStore.from_triples(n, src, dst, np.ones(len(triples)))
    graph = build_top_d_graph(relevance, labels, GADGET_D, RankDiscount.uniform(GADGET_D), names)
    logger.info("Gadget built from %d vertices and %d edges (%d nodes)", len(vertices), len(edges), n)

    return Gadget(graph=graph, relevance=relevance, vertex_ids=vertex_ids, edge_ids=edge_ids,
                  h1=h1, h2=h2, n1=n1, n2=n2)


def cover_operations(gadget: Gadget, cover: Iterable[Hashable]) -> List[RewiringOp]:
    """One (v, h1, n1) operation per cover vertex"""
    return [make_op(gadget.graph, gadget.vertex_ids[v], gadget.h1, gadget.n1, 1.0)
            for v in _ordered(cover)]


def expected_edge_segregation(gadget: Gadget, cover: Iterable[Hashable]) -> Dict[int, float]:
    """Closed-form z of every edge node after the cover operations"""
    covered: Set[Hashable] = set(cover)
    expected = {}
    for (a, b), e in gadget.edge_ids.items():
        hits = (a in covered) + (b in covered)
        expected[e] = (Z_EDGE, Z_EDGE_ONE_COVERED, Z_EDGE_BOTH_COVERED)[hits]
    return expected


def minimum_vertex_cover(source: nx.Graph) -> List[Hashable]:
    """Exact minimum cover by enumeration; first cover in vertex order wins"""
    vertices = _ordered(source.nodes)
    if len(vertices) > MAX_COVER_SEARCH_NODES:
        raise ValueError(f"Exact cover search is limited to {MAX_COVER_SEARCH_NODES} vertices")
    edges = list(source.edges)
    for size in range(len(vertices) + 1):
        for cover in itertools.combinations(vertices, size):
            chosen = set(cover)
            if all(a in chosen or b in chosen for a, b in edges):
                return list(cover)
    return vertices


def read_edge_list(path: str) -> nx.Graph:
    """Read src,dst rows; an empty dst declares an isolated vertex"""
    frame = read_table(path, ["src", "dst"], ["src", "dst"])
    source = nx.Graph()
    for a, b in zip(frame["src"].str.strip(), frame["dst"].str.strip()):
        if not a:
            continue
        source.add_node(a)
        if b:
            source.add_edge(a, b)
    return source


def cover_structure(source: nx.Graph, cover: Optional[List[Hashable]] = None) -> Dict[str, int]:
    """Count edges covered once and twice by a cover"""
    chosen = set(cover if cover is not None else minimum_vertex_cover(source))
    counts = {"uncovered": 0, "single": 0, "double": 0}
    for a, b in source.edges:
        hits = (a in chosen) + (b in chosen)
        counts[("uncovered", "single", "double")[hits]] += 1
    return counts
