"""
Synthetic relevance instances for tests, benchmarks and the generate command
"""

import logging
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from core.graph import (
    NodeLabel,
    RankDiscount,
    RecGraph,
    RelevanceStore,
    build_top_d_graph,
    unreachable_harmful,
)

logger = logging.getLogger(__name__)

Rows = List[Tuple[np.ndarray, np.ndarray]]


@dataclass
class SyntheticInstance:
    relevance: RelevanceStore
    labels: np.ndarray
    names: List[str]
    d: int

    def graph(self, discount: str = "uniform") -> RecGraph:
        return build_top_d_graph(self.relevance, self.labels, self.d,
                                 RankDiscount.create(discount, self.d), self.names)


def _scores(rng: np.random.Generator, size: int) -> np.ndarray:
    # four decimals keep CSV round trips exact and leave room for ties
    return np.maximum(np.round(rng.uniform(0.0, 1.0, size), 4), 1e-4)


def _store(n: int, rows: Rows) -> RelevanceStore:
    src = np.concatenate([np.full(len(ids), u) for u, (ids, _) in enumerate(rows)])
    dst = np.concatenate([ids for ids, _ in rows])
    score = np.concatenate([vals for _, vals in rows])
    return RelevanceStore.from_triples(n, src, dst, score)


def _repair_reachability(rows: Rows, labels: np.ndarray, d: int,
                         rng: np.random.Generator) -> RelevanceStore:
    """Give every harmful node without a neutral exit a top-scored neutral item"""
    n = len(labels)
    neutral = np.flatnonzero(labels == NodeLabel.NEUTRAL)
    if not len(neutral):
        return _store(n, rows)

    for _ in range(n + 1):
        store = _store(n, rows)
        graph = build_top_d_graph(store, labels, d, RankDiscount.uniform(d))
        stuck = unreachable_harmful(graph)
        if not stuck:
            return store
        logger.debug("Repairing reachability of %d harmful nodes", len(stuck))
        for u in stuck:
            ids, vals = rows[u]
            mask = labels[ids] == NodeLabel.NEUTRAL
            w = int(ids[mask][np.argmax(vals[mask])]) if mask.any() else int(rng.choice(neutral))
            if w in ids:
                vals = vals.copy()
                vals[ids == w] = 1.0
                rows[u] = (ids, vals)
            else:
                rows[u] = (np.append(ids, w), np.append(vals, 1.0))
    raise RuntimeError("Reachability repair did not settle")


def _sample_ids(rng: np.random.Generator, pool: np.ndarray, count: int, exclude: int) -> np.ndarray:
    if count <= 0 or not len(pool):
        return np.empty(0, dtype=np.int64)
    picked = pool[rng.integers(0, len(pool), size=count)]
    return picked[picked != exclude]


def random_instance(n: int, d: int, harmful_fraction: float = 0.5, seed: int = 0,
                    candidates: int = 0) -> SyntheticInstance:
    """
    Uniformly random relevance with a harmful share of nodes

    Args:
        n: Node count (needs n > d)
        d: Out-degree of the graph built from it
        harmful_fraction: Share of harmful nodes
        seed: Generator seed
        candidates: Scored items per node; defaults to 3d capped at n-1

    Returns:
        SyntheticInstance: Relevance, labels and names, repaired so every harmful node reaches neutral
    """
    if n <= d:
        raise ValueError(f"n must exceed d (got n={n}, d={d})")
    rng = np.random.default_rng(seed)
    m = min(n - 1, candidates or 3 * d)

    labels = np.zeros(n, dtype=np.int8)
    labels[rng.permutation(n)[: int(round(harmful_fraction * n))]] = NodeLabel.HARMFUL

    rows: Rows = []
    for u in range(n):
        offsets = rng.choice(n - 1, size=m, replace=False)
        ids = np.sort(np.where(offsets >= u, offsets + 1, offsets))
        rows.append((ids, _scores(rng, m)))

    store = _repair_reachability(rows, labels, d, rng)
    return SyntheticInstance(store, labels, [str(i) for i in range(n)], d)


def homophilous_instance(n: int, d: int, within_block: float = 0.9, harmful_fraction: float = 0.5,
                         seed: int = 0, candidates: int = 0) -> SyntheticInstance:
    """Two label blocks whose candidates stay inside their block with probability within_block"""
    if n <= d:
        raise ValueError(f"n must exceed d (got n={n}, d={d})")
    rng = np.random.default_rng(seed)
    m = min(n - 1, candidates or 2 * d)
    everyone = np.arange(n)

    labels = np.zeros(n, dtype=np.int8)
    labels[rng.permutation(n)[: int(round(harmful_fraction * n))]] = NodeLabel.HARMFUL
    blocks = {
        NodeLabel.HARMFUL: np.flatnonzero(labels == NodeLabel.HARMFUL),
        NodeLabel.NEUTRAL: np.flatnonzero(labels == NodeLabel.NEUTRAL),
    }

    rows: Rows = []
    for u in range(n):
        own = blocks[NodeLabel(int(labels[u]))]
        other = blocks[NodeLabel(1 - int(labels[u]))]
        ids = np.empty(0, dtype=np.int64)
        attempts = 0
        while len(ids) < m:
            attempts += 1
            inside = rng.binomial(m, within_block)
            drawn = np.concatenate([
                _sample_ids(rng, own, inside, u),
                _sample_ids(rng, other, m - inside, u),
            ])
            if attempts > 20:
                # small blocks cannot supply m distinct items
                drawn = _sample_ids(rng, everyone, m, u)
            ids = np.unique(np.concatenate([ids, drawn]))
        ids = rng.permutation(ids)[:m]
        rows.append((np.sort(ids), _scores(rng, m)))

    store = _repair_reachability(rows, labels, d, rng)
    return SyntheticInstance(store, labels, [str(i) for i in range(n)], d)
