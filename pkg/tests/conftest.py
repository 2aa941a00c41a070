"""
Shared fixtures: a hand-checkable chain, the triangle gadget and small synthetic instances
"""

import os

os.environ.setdefault("SEGRA_ENV", "testing")

import networkx as nx
import numpy as np
import pytest

from core.gadget import build_gadget
from core.graph import NodeLabel, RankDiscount, RecGraph, RelevanceStore, build_top_d_graph
from core.synthetic import homophilous_instance, random_instance

H = NodeLabel.HARMFUL
N = NodeLabel.NEUTRAL


@pytest.fixture
def chain():
    """
    a -> b -> c with d=1: a and b harmful, c neutral and pointing back at a.
    Relevance also offers c to a, which is the only rewiring.
    """
    relevance = RelevanceStore.from_triples(
        3,
        [0, 0, 1, 2],
        [1, 2, 2, 0],
        [0.9, 0.5, 0.8, 0.7],
    )
    graph = build_top_d_graph(relevance, [H, H, N], 1, RankDiscount.uniform(1), ["a", "b", "c"])
    return graph, relevance


@pytest.fixture
def two_slot_graph():
    """Four nodes, d=2: harmful 0 and 1 list each other first, neutral 2 and 3 close the loop"""
    triples = [
        (0, 1, 0.9), (0, 2, 0.8), (0, 3, 0.7),
        (1, 0, 0.9), (1, 3, 0.6), (1, 2, 0.5),
        (2, 3, 0.9), (2, 0, 0.4),
        (3, 2, 0.9), (3, 1, 0.3),
    ]
    src, dst, score = zip(*triples)
    relevance = RelevanceStore.from_triples(4, src, dst, score)
    graph = build_top_d_graph(relevance, [H, H, N, N], 2, RankDiscount.uniform(2))
    return graph, relevance


@pytest.fixture
def triangle():
    return nx.Graph([("a", "b"), ("a", "c"), ("b", "c")])


@pytest.fixture
def triangle_gadget(triangle):
    return build_gadget(triangle)


@pytest.fixture
def small_random():
    return random_instance(60, 4, harmful_fraction=0.5, seed=7)


@pytest.fixture
def small_homophilous():
    return homophilous_instance(80, 4, within_block=0.9, seed=3)


@pytest.fixture
def graph_factory():
    """RecGraph straight from lists; scores default to 1.0 everywhere"""

    def make_graph(lists, labels, d=None, scores=None, discount="uniform"):
        lists = np.asarray(lists, dtype=np.int64)
        d = d or lists.shape[1]
        if scores is None:
            scores = np.ones(lists.shape)
        return RecGraph.from_lists(lists, scores, labels, RankDiscount.create(discount, d))

    return make_graph
