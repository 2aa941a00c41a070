"""
CSV persistence for labels, relevance scores and graph dumps
"""

import logging
import os
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from core.errors import InputFormatError
from core.graph import (
    NodeLabel,
    RankDiscount,
    RecGraph,
    RelevanceStore,
    ideal_dcg_from_relevance,
)

logger = logging.getLogger(__name__)

GRAPH_COLUMNS = ["src", "dst", "rank", "prob", "score"]


def read_table(path: str, required: Sequence[str], text_columns: Sequence[str]) -> pd.DataFrame:
    if not os.path.exists(path):
        raise InputFormatError(f"File not found: {path}")
    try:
        frame = pd.read_csv(path, dtype={c: str for c in text_columns}, keep_default_na=False,
                            skipinitialspace=True, float_precision="round_trip")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise InputFormatError(f"Could not parse {path}: {e}") from e

    frame.columns = [str(c).strip().lower() for c in frame.columns]
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise InputFormatError(f"{path} is missing columns: {', '.join(missing)}")
    return frame


def _numeric(frame: pd.DataFrame, column: str, path: str) -> np.ndarray:
    values = pd.to_numeric(frame[column], errors="coerce")
    if values.isna().any():
        row = int(np.flatnonzero(values.isna().to_numpy())[0])
        raise InputFormatError(f"{path}: unparseable {column} '{frame[column].iloc[row]}' on row {row + 2}")
    return values.to_numpy()


def read_labels(path: str) -> Tuple[List[str], np.ndarray]:
    """
    Read a node,label file

    Returns:
        tuple: External ids in file order (dense id = position) and NodeLabel values
    """
    frame = read_table(path, ["node", "label"], ["node", "label"])
    names = [str(n).strip() for n in frame["node"]]
    if len(set(names)) != len(names):
        raise InputFormatError(f"{path} lists some node more than once")
    try:
        labels = np.array([NodeLabel.parse(label) for label in frame["label"]], dtype=np.int8)
    except ValueError as e:
        raise InputFormatError(f"{path}: {e}") from e
    logger.info("Read %d labels (%d harmful) from %s", len(names),
                int((labels == NodeLabel.HARMFUL).sum()), path)
    return names, labels


def read_relevance(path: str, names: List[str]) -> RelevanceStore:
    """Read a src,dst,score file; ids must appear in the labels file"""
    frame = read_table(path, ["src", "dst", "score"], ["src", "dst"])
    index: Dict[str, int] = {name: i for i, name in enumerate(names)}

    src_names = frame["src"].str.strip()
    dst_names = frame["dst"].str.strip()
    unknown = sorted((set(src_names) | set(dst_names)) - set(index))
    if unknown:
        preview = ", ".join(unknown[:5])
        raise InputFormatError(f"{path} references {len(unknown)} nodes missing from labels: {preview}")

    scores = _numeric(frame, "score", path)
    src = src_names.map(index).to_numpy(dtype=np.int64)
    dst = dst_names.map(index).to_numpy(dtype=np.int64)
    store = RelevanceStore.from_triples(len(names), src, dst, scores)
    logger.info("Read %d relevance entries from %s", store.nnz, path)
    return store


def write_instance(relevance: RelevanceStore, labels: np.ndarray, names: List[str],
                   out_dir: str) -> Tuple[str, str]:
    """Write relevance.csv and labels.csv with external ids"""
    os.makedirs(out_dir, exist_ok=True)
    coo = relevance.matrix.tocoo()
    order = np.lexsort((coo.col, coo.row))
    relevance_path = os.path.join(out_dir, "relevance.csv")
    labels_path = os.path.join(out_dir, "labels.csv")

    pd.DataFrame({
        "src": [names[i] for i in coo.row[order]],
        "dst": [names[i] for i in coo.col[order]],
        "score": coo.data[order],
    }).to_csv(relevance_path, index=False, lineterminator="\n")
    pd.DataFrame({
        "node": names,
        "label": [str(NodeLabel(int(label))) for label in labels],
    }).to_csv(labels_path, index=False, lineterminator="\n")
    return relevance_path, labels_path


class GraphRepository:
    """Graph dumps with their remap and label sidecars"""

    @staticmethod
    def paths(path: str) -> Dict[str, str]:
        stem = path[:-4] if path.lower().endswith(".csv") else path
        return {
            "graph": stem + ".csv",
            "remap": stem + ".remap.csv",
            "labels": stem + ".labels.csv",
        }

    def save(self, graph: RecGraph, path: str) -> Dict[str, str]:
        """Write the dump sorted by (src, rank) plus both sidecars"""
        paths = self.paths(path)
        directory = os.path.dirname(paths["graph"])
        if directory:
            os.makedirs(directory, exist_ok=True)

        n, d = graph.n, graph.d
        ranks = np.tile(np.arange(1, d + 1), n)
        pd.DataFrame({
            "src": np.repeat(np.arange(n), d),
            "dst": graph.lists.ravel(),
            "rank": ranks,
            "prob": np.asarray(graph.discount.table)[ranks - 1],
            "score": graph.scores.ravel(),
        }, columns=GRAPH_COLUMNS).to_csv(paths["graph"], index=False, lineterminator="\n")
        pd.DataFrame({"node": np.arange(n), "external_id": graph.node_names}).to_csv(
            paths["remap"], index=False, lineterminator="\n")
        pd.DataFrame({"node": np.arange(n), "label": [str(NodeLabel(int(x))) for x in graph.labels]}).to_csv(
            paths["labels"], index=False, lineterminator="\n")
        logger.info("Saved graph dump to %s", paths["graph"])
        return paths

    def load(self, path: str, relevance: Optional[RelevanceStore] = None) -> RecGraph:
        """
        Load a dump and its sidecars

        Args:
            path: Graph dump path
            relevance: When given, slot scores and ideal DCG come from it

        Returns:
            RecGraph: The stored graph
        """
        paths = self.paths(path)
        frame = read_table(paths["graph"], GRAPH_COLUMNS, [])
        _, labels = read_labels(paths["labels"])
        n = len(labels)

        src = _numeric(frame, "src", paths["graph"]).astype(np.int64)
        dst = _numeric(frame, "dst", paths["graph"]).astype(np.int64)
        rank = _numeric(frame, "rank", paths["graph"]).astype(np.int64)
        prob = _numeric(frame, "prob", paths["graph"]).astype(np.float64)
        score = _numeric(frame, "score", paths["graph"]).astype(np.float64)

        if n == 0 or len(frame) % n:
            raise InputFormatError(f"{paths['graph']} has {len(frame)} rows for {n} nodes")
        d = len(frame) // n
        if ((src < 0) | (src >= n)).any() or ((rank < 1) | (rank > d)).any():
            raise InputFormatError(f"{paths['graph']} has src or rank values out of range")

        slot = src * d + (rank - 1)
        if len(np.unique(slot)) != len(slot):
            raise InputFormatError(f"{paths['graph']} repeats a (src, rank) slot")

        lists = np.empty(n * d, dtype=np.int64)
        scores = np.empty(n * d, dtype=np.float64)
        table = np.empty(d, dtype=np.float64)
        lists[slot] = dst
        scores[slot] = score
        table[rank - 1] = prob
        if not np.allclose(prob, table[rank - 1], rtol=0.0, atol=1e-15):
            raise InputFormatError(f"{paths['graph']} assigns different probabilities to one rank")
        lists = lists.reshape(n, d)
        scores = scores.reshape(n, d)

        kind = _infer_kind(table)
        discount = RankDiscount.create(kind, d) if kind != "custom" else RankDiscount(kind, table)
        names = self._names(paths["remap"], n)

        ideal = None
        if relevance is not None:
            if relevance.n != n:
                raise InputFormatError(f"Relevance covers {relevance.n} nodes, graph has {n}")
            ideal = ideal_dcg_from_relevance(relevance, d)
            scores = np.array([[relevance.score(u, int(v)) for v in lists[u]] for u in range(n)])

        graph = RecGraph.from_lists(lists, scores, labels, discount, names, ideal)
        logger.info("Loaded graph dump %s (%d nodes, d=%d, %s discount)",
                    paths["graph"], n, d, discount.kind)
        return graph

    def node_names(self, path: str) -> List[str]:
        """External ids of a dump, from its sidecars"""
        paths = self.paths(path)
        _, labels = read_labels(paths["labels"])
        return self._names(paths["remap"], len(labels))

    @staticmethod
    def _names(path: str, n: int) -> List[str]:
        if not os.path.exists(path):
            return [str(i) for i in range(n)]
        frame = read_table(path, ["node", "external_id"], ["external_id"])
        nodes = _numeric(frame, "node", path).astype(np.int64)
        names = [str(i) for i in range(n)]
        for node, name in zip(nodes, frame["external_id"]):
            if 0 <= node < n:
                names[node] = str(name)
        return names


def _infer_kind(table: np.ndarray) -> str:
    d = len(table)
    for kind in ("uniform", "invlog"):
        if np.allclose(table, RankDiscount.create(kind, d).table, rtol=0.0, atol=1e-12):
            return kind
    return "custom"


def load_inputs(relevance_path: str, labels_path: str) -> Tuple[List[str], np.ndarray, RelevanceStore]:
    names, labels = read_labels(labels_path)
    return names, labels, read_relevance(relevance_path, names)
