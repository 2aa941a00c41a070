"""
Recommendation graph model: top-d lists, rank discounts and nDCG quality
"""

import logging
import math
from dataclasses import dataclass, field
from enum import IntEnum
from functools import lru_cache
from typing import TYPE_CHECKING, Any, Dict, List, Optional, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import breadth_first_order

from core.errors import (
    EdgeNotFoundError,
    InvalidScoreError,
    NodeWithFewerThanDCandidatesError,
    PreconditionViolatedError,
    ZeroIdealDcgError,
)

if TYPE_CHECKING:
    from core.rewire import RewiringOp

logger = logging.getLogger(__name__)

PROBABILITY_TOL = 1e-12
DRIFT_TOL = 1e-9

DISCOUNT_ALIASES = {
    "uniform": "uniform",
    "flat": "uniform",
    "invlog": "invlog",
    "inverse_log": "invlog",
    "inverse-log": "invlog",
    "inverselog": "invlog",
    "inverselogdiscount": "invlog",
}


class NodeLabel(IntEnum):
    NEUTRAL = 0
    HARMFUL = 1

    @classmethod
    def parse(cls, text: str) -> "NodeLabel":
        """Parse a label cell, case-insensitive"""
        key = str(text).strip().lower()
        if key == "harmful":
            return cls.HARMFUL
        if key == "neutral":
            return cls.NEUTRAL
        raise ValueError(f"Unknown label: '{text}'. Expected harmful or neutral")

    def __str__(self) -> str:
        return self.name.lower()


def validate_discount(kind: str) -> str:
    """
    Validate and normalize a discount name

    Args:
        kind: Discount name (case insensitive, aliases accepted)

    Returns:
        str: "uniform" or "invlog"

    Raises:
        ValueError: If the discount is not supported
    """
    if not kind:
        return "uniform"

    key = kind.lower().strip()
    if key in DISCOUNT_ALIASES:
        return DISCOUNT_ALIASES[key]

    raise ValueError(f"Unsupported discount: '{kind}'. Available discounts: uniform, invlog")


@lru_cache(maxsize=64)
def dcg_weights(d: int) -> np.ndarray:
    """Positional DCG weights 1/(1+log2(1+i)) for ranks 1..d"""
    ranks = np.arange(1, d + 1, dtype=np.float64)
    weights = 1.0 / (1.0 + np.log2(1.0 + ranks))
    weights.setflags(write=False)
    return weights


def _dcg_from_scores(scores: np.ndarray) -> float:
    # fsum is exactly rounded, so equal slot scores always give equal DCG
    weights = dcg_weights(len(scores))
    return math.fsum(np.asarray(scores, dtype=np.float64) * weights)


@dataclass(frozen=True)
class RankDiscount:
    """Rank-to-probability table p[1..d]; the table is not checked here so drift can be audited"""

    kind: str
    table: np.ndarray

    @property
    def d(self) -> int:
        return len(self.table)

    def p(self, rank: int) -> float:
        return float(self.table[rank - 1])

    @classmethod
    def uniform(cls, d: int) -> "RankDiscount":
        return cls("uniform", np.full(d, 1.0 / d))

    @classmethod
    def inverse_log(cls, d: int) -> "RankDiscount":
        weights = np.array(dcg_weights(d), dtype=np.float64)
        return cls("invlog", weights / weights.sum())

    @classmethod
    def create(cls, kind: str, d: int) -> "RankDiscount":
        if d < 1:
            raise ValueError(f"d must be >= 1 (got {d})")
        name = validate_discount(kind)
        if name == "invlog":
            return cls.inverse_log(d)
        return cls.uniform(d)


class RelevanceStore:
    """Sparse relevance scores s_uv in [0, 1]; absent pairs read as 0"""

    def __init__(self, matrix: sparse.csr_matrix):
        matrix = sparse.csr_matrix(matrix, dtype=np.float64)
        matrix.sum_duplicates()
        matrix.eliminate_zeros()
        matrix.sort_indices()
        self.matrix = matrix

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    @classmethod
    def from_triples(cls, n: int, src: Sequence[int], dst: Sequence[int],
                     score: Sequence[float]) -> "RelevanceStore":
        """
        Build a store from parallel (src, dst, score) sequences

        Args:
            n: Number of nodes
            src: Source node ids
            dst: Destination node ids
            score: Relevance scores in [0, 1]

        Returns:
            RelevanceStore: The validated store

        Raises:
            InvalidScoreError: Scores outside [0, 1] or duplicated pairs
        """
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        score = np.asarray(score, dtype=np.float64)

        if not (len(src) == len(dst) == len(score)):
            raise ValueError("src, dst and score must have equal length")
        if len(src) and (src.min() < 0 or dst.min() < 0 or src.max() >= n or dst.max() >= n):
            raise ValueError(f"Relevance node ids must lie in 0..{n - 1}")

        bad = ~((score >= 0.0) & (score <= 1.0))
        if bad.any():
            first = int(np.flatnonzero(bad)[0])
            raise InvalidScoreError(
                f"Score {score[first]} for ({src[first]}, {dst[first]}) is outside [0, 1]"
            )

        self_pairs = src == dst
        if self_pairs.any():
            logger.warning("Dropping %d self-relevance entries", int(self_pairs.sum()))
            keep = ~self_pairs
            src, dst, score = src[keep], dst[keep], score[keep]

        keys = src * n + dst
        unique, counts = np.unique(keys, return_counts=True)
        if (counts > 1).any():
            dup = int(unique[counts > 1][0])
            raise InvalidScoreError(f"Duplicate relevance entry for ({dup // n}, {dup % n})")

        matrix = sparse.coo_matrix((score, (src, dst)), shape=(n, n)).tocsr()
        return cls(matrix)

    def row(self, u: int):
        """Return (ids, scores) of the stored entries of u, ids ascending"""
        start, end = self.matrix.indptr[u], self.matrix.indptr[u + 1]
        return self.matrix.indices[start:end], self.matrix.data[start:end]

    def score(self, u: int, v: int) -> float:
        ids, scores = self.row(u)
        pos = np.searchsorted(ids, v)
        if pos < len(ids) and ids[pos] == v:
            return float(scores[pos])
        return 0.0


@dataclass
class RecommendationList:
    owner: int
    items: np.ndarray
    scores: np.ndarray

    def __len__(self) -> int:
        return len(self.items)

    def rank_of(self, v: int) -> Optional[int]:
        hits = np.flatnonzero(self.items == v)
        return int(hits[0]) + 1 if len(hits) else None


@dataclass
class RecGraph:
    """
    Directed d-regular recommendation graph

    lists[u, i-1] is the item at rank i of u; scores holds s_u. for each slot.
    """

    n: int
    d: int
    labels: np.ndarray
    lists: np.ndarray
    scores: np.ndarray
    discount: RankDiscount
    ideal_dcg: np.ndarray
    node_names: List[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.node_names:
            self.node_names = [str(i) for i in range(self.n)]

    @classmethod
    def from_lists(cls, lists: Sequence[Sequence[int]], scores: Sequence[Sequence[float]],
                   labels: Sequence[int], discount: RankDiscount,
                   node_names: Optional[List[str]] = None,
                   ideal_dcg: Optional[np.ndarray] = None) -> "RecGraph":
        """Wrap ready-made lists; ideal DCG defaults to the DCG of the given lists"""
        lists_arr = np.asarray(lists, dtype=np.int64)
        scores_arr = np.asarray(scores, dtype=np.float64)
        n, d = lists_arr.shape
        if ideal_dcg is None:
            ideal_dcg = np.array([_dcg_from_scores(scores_arr[u]) for u in range(n)])
        return cls(
            n=n,
            d=d,
            labels=np.asarray(labels, dtype=np.int8),
            lists=lists_arr,
            scores=scores_arr,
            discount=discount,
            ideal_dcg=np.asarray(ideal_dcg, dtype=np.float64),
            node_names=list(node_names) if node_names else [],
        )

    def copy(self) -> "RecGraph":
        return RecGraph(
            n=self.n,
            d=self.d,
            labels=self.labels.copy(),
            lists=self.lists.copy(),
            scores=self.scores.copy(),
            discount=self.discount,
            ideal_dcg=self.ideal_dcg.copy(),
            node_names=list(self.node_names),
        )

    @property
    def harmful_mask(self) -> np.ndarray:
        return self.labels == NodeLabel.HARMFUL

    @property
    def harmful_ids(self) -> np.ndarray:
        return np.flatnonzero(self.harmful_mask)

    @property
    def neutral_ids(self) -> np.ndarray:
        return np.flatnonzero(~self.harmful_mask)

    def is_harmful(self, u: int) -> bool:
        return bool(self.labels[u] == NodeLabel.HARMFUL)

    def has_edge(self, u: int, v: int) -> bool:
        return bool((self.lists[u] == v).any())

    def rank_of(self, u: int, v: int) -> int:
        hits = np.flatnonzero(self.lists[u] == v)
        if not len(hits):
            raise EdgeNotFoundError(u, v)
        return int(hits[0]) + 1

    def recommendation_list(self, u: int) -> RecommendationList:
        return RecommendationList(owner=u, items=self.lists[u].copy(), scores=self.scores[u].copy())

    def in_degrees(self) -> np.ndarray:
        valid = self.lists[(self.lists >= 0) & (self.lists < self.n)]
        return np.bincount(valid.ravel(), minlength=self.n)

    def edge_count(self) -> int:
        return self.n * self.d


def top_d_items(relevance: RelevanceStore, u: int, d: int):
    """The d best positive-score items of u by (score desc, id asc)"""
    ids, vals = relevance.row(u)
    positive = vals > 0
    ids, vals = ids[positive], vals[positive]
    if len(ids) < d:
        raise NodeWithFewerThanDCandidatesError(u, len(ids), d)
    order = np.lexsort((ids, -vals))[:d]
    return ids[order], vals[order]


def ideal_dcg_from_relevance(relevance: RelevanceStore, d: int) -> np.ndarray:
    """DCG of every node's original top-d list, without building the graph"""
    return np.array([_dcg_from_scores(top_d_items(relevance, u, d)[1]) for u in range(relevance.n)])


def build_top_d_graph(relevance: RelevanceStore, labels: Sequence[int], d: int,
                      discount: RankDiscount,
                      node_names: Optional[List[str]] = None) -> RecGraph:
    """
    Select every node's top-d items by relevance

    Args:
        relevance: Relevance store over n nodes
        labels: Per-node NodeLabel values
        d: Out-degree
        discount: Rank discount with a table of length d

    Returns:
        RecGraph: Graph with score-descending lists, ties broken by ascending id

    Raises:
        NodeWithFewerThanDCandidatesError: A node has fewer than d positive scores
    """
    if d < 1:
        raise ValueError(f"d must be >= 1 (got {d})")
    if discount.d != d:
        raise ValueError(f"Discount table has {discount.d} ranks, graph needs {d}")

    n = relevance.n
    labels_arr = np.asarray(labels, dtype=np.int8)
    if len(labels_arr) != n:
        raise ValueError(f"Got {len(labels_arr)} labels for {n} nodes")

    lists = np.empty((n, d), dtype=np.int64)
    scores = np.empty((n, d), dtype=np.float64)
    ideal = np.empty(n, dtype=np.float64)

    for u in range(n):
        lists[u], scores[u] = top_d_items(relevance, u, d)
        ideal[u] = _dcg_from_scores(scores[u])

    logger.info("Built top-%d graph over %d nodes (%d harmful)", d, n,
                int((labels_arr == NodeLabel.HARMFUL).sum()))

    return RecGraph(
        n=n,
        d=d,
        labels=labels_arr,
        lists=lists,
        scores=scores,
        discount=discount,
        ideal_dcg=ideal,
        node_names=list(node_names) if node_names else [],
    )


def transition_probability(graph: RecGraph, u: int, v: int) -> float:
    return graph.discount.p(graph.rank_of(u, v))


def dcg(rec_list: RecommendationList, relevance: RelevanceStore) -> float:
    """DCG of a list over its actual slot ranks, scores looked up in the store"""
    scores = np.array([relevance.score(rec_list.owner, int(v)) for v in rec_list.items])
    return _dcg_from_scores(scores)


def quality_loss(rec_list: RecommendationList, graph: RecGraph,
                 relevance: RelevanceStore) -> float:
    ideal = graph.ideal_dcg[rec_list.owner]
    if not ideal > 0:
        raise ZeroIdealDcgError(rec_list.owner)
    return dcg(rec_list, relevance) / ideal


def slot_quality(graph: RecGraph, u: int, rank: Optional[int] = None,
                 score: float = 0.0) -> float:
    """
    Quality of u's current list, optionally with the slot at ``rank`` rescored

    Uses the stored slot scores, which equal the relevance store for every list
    built or rewired by this package.
    """
    ideal = graph.ideal_dcg[u]
    if not ideal > 0:
        raise ZeroIdealDcgError(u)
    scores = graph.scores[u]
    if rank is not None:
        scores = scores.copy()
        scores[rank - 1] = score
    return _dcg_from_scores(scores) / ideal


def _check_rewiring(graph: RecGraph, op: "RewiringOp") -> int:
    u, v, w = op.u, op.v, op.w
    for node in (u, v, w):
        if not 0 <= node < graph.n:
            raise PreconditionViolatedError("node_range", f"node {node} outside 0..{graph.n - 1}")
    if not graph.is_harmful(u):
        raise PreconditionViolatedError("source_harmful", f"source {u} is not harmful")
    if not graph.has_edge(u, v):
        raise PreconditionViolatedError("edge_present", f"({u}, {v}) is not an edge")
    if not graph.is_harmful(v):
        raise PreconditionViolatedError("target_harmful", f"removed target {v} is not harmful")
    if graph.is_harmful(w):
        raise PreconditionViolatedError("insert_neutral", f"inserted target {w} is not neutral")
    if graph.has_edge(u, w):
        raise PreconditionViolatedError("insert_absent", f"({u}, {w}) is already an edge")
    rank = graph.rank_of(u, v)
    if op.rank != rank:
        raise PreconditionViolatedError("rank_match", f"{v} sits at rank {rank}, op says {op.rank}")
    if abs(op.p_o - graph.discount.p(rank)) > PROBABILITY_TOL:
        raise PreconditionViolatedError(
            "probability_match", f"p_o={op.p_o} differs from p[{rank}]={graph.discount.p(rank)}"
        )
    return rank


def apply_rewiring(graph: RecGraph, op: "RewiringOp") -> None:
    """Replace (u, v) by (u, w) in place, keeping v's rank and probability"""
    rank = _check_rewiring(graph, op)
    graph.lists[op.u, rank - 1] = op.w
    graph.scores[op.u, rank - 1] = op.score


def revert_rewiring(graph: RecGraph, op: "RewiringOp") -> None:
    """Undo apply_rewiring: put v back in the slot now held by w"""
    u, rank = op.u, op.rank
    if graph.lists[u, rank - 1] != op.w:
        raise PreconditionViolatedError("revert_slot", f"rank {rank} of {u} does not hold {op.w}")
    if graph.has_edge(u, op.v):
        raise PreconditionViolatedError("revert_absent", f"({u}, {op.v}) is already an edge")
    graph.lists[u, rank - 1] = op.v
    graph.scores[u, rank - 1] = op.replaced_score


@dataclass
class GraphReport:
    """Outcome of validate_graph; empty lists mean the check passed"""

    n: int
    d: int
    harmful: int
    degree_violations: List[int] = field(default_factory=list)
    duplicate_items: List[int] = field(default_factory=list)
    self_loops: List[int] = field(default_factory=list)
    label_problems: List[str] = field(default_factory=list)
    probability_sum: float = 1.0
    probability_drift: bool = False
    discount_increasing: bool = False
    unreachable: List[int] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.problems()

    @property
    def reachable(self) -> bool:
        return not self.unreachable

    def problems(self) -> List[str]:
        found = []
        if self.degree_violations:
            found.append(f"{len(self.degree_violations)} nodes with invalid out-lists")
        if self.duplicate_items:
            found.append(f"{len(self.duplicate_items)} nodes with duplicate items")
        if self.self_loops:
            found.append(f"{len(self.self_loops)} nodes recommending themselves")
        found.extend(self.label_problems)
        if self.probability_drift:
            found.append(f"probability table sums to {self.probability_sum:.12g}")
        if self.discount_increasing:
            found.append("probability table increases with rank")
        if self.unreachable:
            found.append(f"{len(self.unreachable)} harmful nodes cannot reach a neutral node")
        return found

    def to_dict(self) -> Dict[str, Any]:
        return {
            "ok": self.ok,
            "n": self.n,
            "d": self.d,
            "harmful": self.harmful,
            "degree_violations": self.degree_violations,
            "duplicate_items": self.duplicate_items,
            "self_loops": self.self_loops,
            "label_problems": self.label_problems,
            "probability_sum": self.probability_sum,
            "probability_drift": self.probability_drift,
            "discount_increasing": self.discount_increasing,
            "unreachable": self.unreachable,
            "problems": self.problems(),
        }


def unreachable_harmful(graph: RecGraph) -> List[int]:
    """Harmful nodes with no positive-probability path to a neutral node"""
    n = graph.n
    harmful = graph.harmful_mask
    if not harmful.any():
        return []

    live_ranks = np.flatnonzero(graph.discount.table > 0)
    src = np.repeat(np.arange(n), len(live_ranks))
    dst = graph.lists[:, live_ranks].ravel()
    keep = harmful[src] & (dst >= 0) & (dst < n)
    src, dst = src[keep], dst[keep]

    # reversed edges plus a virtual root pointing at every neutral node
    root = n
    neutral = np.flatnonzero(~harmful)
    rows = np.concatenate([dst, np.full(len(neutral), root)])
    cols = np.concatenate([src, neutral])
    reverse = sparse.csr_matrix(
        (np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(n + 1, n + 1)
    )
    reached = np.zeros(n + 1, dtype=bool)
    reached[breadth_first_order(reverse, root, directed=True, return_predecessors=False)] = True
    return [int(h) for h in np.flatnonzero(harmful & ~reached[:n])]


def validate_graph(graph: RecGraph) -> GraphReport:
    """Run every structural check and report, never raise"""
    lists = graph.lists
    n, d = graph.n, graph.d
    report = GraphReport(n=n, d=d, harmful=int(graph.harmful_mask.sum()))

    if lists.shape != (n, d):
        report.degree_violations = list(range(n))
    else:
        out_of_range = ((lists < 0) | (lists >= n)).any(axis=1)
        report.degree_violations = [int(u) for u in np.flatnonzero(out_of_range)]
        ordered = np.sort(lists, axis=1)
        dup = (ordered[:, 1:] == ordered[:, :-1]).any(axis=1) if d > 1 else np.zeros(n, bool)
        report.duplicate_items = [int(u) for u in np.flatnonzero(dup)]
        loops = (lists == np.arange(n)[:, None]).any(axis=1)
        report.self_loops = [int(u) for u in np.flatnonzero(loops)]

    if len(graph.labels) != n:
        report.label_problems.append(f"{len(graph.labels)} labels for {n} nodes")
    elif not np.isin(graph.labels, (NodeLabel.NEUTRAL, NodeLabel.HARMFUL)).all():
        report.label_problems.append("labels outside {harmful, neutral}")

    table = np.asarray(graph.discount.table, dtype=np.float64)
    if len(table) != d:
        report.label_problems.append(f"probability table has {len(table)} ranks, expected {d}")
    report.probability_sum = float(table.sum())
    report.probability_drift = abs(report.probability_sum - 1.0) > DRIFT_TOL
    report.discount_increasing = bool((np.diff(table) > PROBABILITY_TOL).any())

    if not report.degree_violations and not report.label_problems:
        report.unreachable = unreachable_harmful(graph)

    if report.ok:
        logger.debug("Graph validation passed (%d nodes, %d harmful)", n, report.harmful)
    else:
        logger.warning("Graph validation found: %s", "; ".join(report.problems()))
    return report
