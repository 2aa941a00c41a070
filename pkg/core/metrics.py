"""
Evaluation quantities: Z trajectories, segregation-score distributions,
in-degree inequality and quality audits, plus their file exports
"""

import json
import logging
import os
from dataclasses import dataclass, field
from datetime import date, datetime
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from core.absorbing import SegregationState
from core.errors import EmptySubsetError, ZeroIdealDcgError
from core.graph import NodeLabel, RecGraph, RelevanceStore, quality_loss, validate_graph
from core.rewire import OptimizationTrace, RewiringOp

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ["step", "u", "v", "w", "rank", "p_o", "delta", "Z", "ratio", "wall_time_ms"]
SUBSETS = ("harmful", "neutral", "all")


def ensure_json_serializable(obj):
    """Ensure all data types in the object are JSON serializable"""
    if isinstance(obj, dict):
        return {str(key): ensure_json_serializable(value) for key, value in obj.items()}
    elif isinstance(obj, (list, tuple)):
        return [ensure_json_serializable(item) for item in obj]
    elif isinstance(obj, np.bool_):
        return bool(obj)
    elif isinstance(obj, np.floating):
        return float(obj)
    elif isinstance(obj, np.integer):
        return int(obj)
    elif isinstance(obj, (datetime, date)):
        return obj.isoformat()
    elif isinstance(obj, np.ndarray):
        return ensure_json_serializable(obj.tolist())
    elif hasattr(obj, '__dict__'):
        return ensure_json_serializable(obj.__dict__)
    else:
        return obj


def write_json(data: Dict[str, Any], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        json.dump(ensure_json_serializable(data), handle, indent=2, sort_keys=True)
        handle.write("\n")


def _write_csv(frame: pd.DataFrame, path: str) -> None:
    frame.to_csv(path, index=False, lineterminator="\n")


@dataclass
class TrajectoryRecord:
    step: int
    op: RewiringOp
    Z: float
    ratio: float
    wall_time_ms: float
    delta: float = 0.0


def trajectory(trace: OptimizationTrace) -> List[TrajectoryRecord]:
    return [
        TrajectoryRecord(step=s.step, op=s.op, Z=s.z_after, ratio=s.ratio,
                         wall_time_ms=s.wall_time_ms, delta=s.delta)
        for s in trace.steps
    ]


@dataclass
class DistributionSnapshot:
    """Per-harmful-node z normalized by the initial Z"""

    nodes: np.ndarray
    values: np.ndarray
    mean: float = 0.0
    median: float = 0.0
    p90: float = 0.0
    max: float = 0.0
    count: int = 0

    def summary(self) -> Dict[str, Any]:
        return {
            "mean": self.mean,
            "median": self.median,
            "p90": self.p90,
            "max": self.max,
            "count": self.count,
        }


def distribution_from_values(nodes: Sequence[int], z: np.ndarray, z0_max: float) -> DistributionSnapshot:
    if not z0_max > 0:
        raise ValueError(f"Normalizing segregation must be positive (got {z0_max})")
    values = np.asarray(z, dtype=np.float64) / z0_max
    snapshot = DistributionSnapshot(nodes=np.asarray(nodes, dtype=np.int64), values=values,
                                    count=len(values))
    if len(values):
        snapshot.mean = float(np.mean(values))
        snapshot.median = float(np.median(values))
        snapshot.p90 = float(np.percentile(values, 90))
        snapshot.max = float(np.max(values))
    return snapshot


def snapshot_distribution(state: SegregationState, z0_max: float) -> DistributionSnapshot:
    return distribution_from_values(state.view.harmful, state.z, z0_max)


def gini_coefficient(values: Sequence[float]) -> float:
    """Sorted-rank Gini; an all-zero sample has no inequality"""
    x = np.sort(np.asarray(values, dtype=np.float64))
    n = len(x)
    if n == 0:
        raise EmptySubsetError("Gini coefficient of an empty sample")
    total = x.sum()
    if total == 0:
        return 0.0
    ranks = np.arange(1, n + 1)
    return float(2.0 * np.sum(ranks * x) / (n * total) - (n + 1.0) / n)


def gini_in_degree(graph: RecGraph, subset: str = "all") -> float:
    """
    Gini coefficient of in-degree over a node subset

    Args:
        graph: Recommendation graph
        subset: "harmful", "neutral" or "all"; zero in-degree nodes count

    Returns:
        float: Coefficient in [0, 1]
    """
    key = str(subset).lower().strip()
    if key not in SUBSETS:
        raise ValueError(f"Unknown subset: '{subset}'. Available subsets: {', '.join(SUBSETS)}")

    degrees = graph.in_degrees()
    if key == "harmful":
        degrees = degrees[graph.labels == NodeLabel.HARMFUL]
    elif key == "neutral":
        degrees = degrees[graph.labels == NodeLabel.NEUTRAL]

    if not len(degrees):
        raise EmptySubsetError(f"No {key} nodes to measure")
    return gini_coefficient(degrees)


@dataclass
class QualityAudit:
    tau: float
    losses: np.ndarray
    min_quality: float
    violations: List[int] = field(default_factory=list)
    degree_violations: List[int] = field(default_factory=list)
    duplicate_items: List[int] = field(default_factory=list)
    zero_ideal: List[int] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not (self.violations or self.degree_violations or self.duplicate_items)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "tau": self.tau,
            "min_quality": self.min_quality,
            "violations": self.violations,
            "degree_violations": self.degree_violations,
            "duplicate_items": self.duplicate_items,
            "zero_ideal": self.zero_ideal,
            "ok": self.ok,
        }


def quality_audit(graph: RecGraph, relevance: RelevanceStore, tau: float) -> QualityAudit:
    """Check every list against the quality floor, out-degree and duplicates"""
    losses = np.full(graph.n, np.nan)
    zero_ideal = []
    for u in range(graph.n):
        try:
            losses[u] = quality_loss(graph.recommendation_list(u), graph, relevance)
        except ZeroIdealDcgError:
            zero_ideal.append(u)

    report = validate_graph(graph)
    audit = QualityAudit(
        tau=tau,
        losses=losses,
        min_quality=float(np.nanmin(losses)) if np.isfinite(losses).any() else 1.0,
        violations=[int(u) for u in np.flatnonzero(losses < tau)],
        degree_violations=report.degree_violations,
        duplicate_items=report.duplicate_items,
        zero_ideal=zero_ideal,
    )
    if audit.violations:
        logger.warning("%d lists fall below the quality floor %.4f", len(audit.violations), tau)
    return audit


def _names(node_names: Optional[List[str]], ids: Sequence[int]) -> List[str]:
    if not node_names:
        return [str(int(i)) for i in ids]
    return [node_names[int(i)] for i in ids]


def export_trace(trace: OptimizationTrace, path: str,
                 node_names: Optional[List[str]] = None) -> None:
    records = trajectory(trace)
    frame = pd.DataFrame({
        "step": [r.step for r in records],
        "u": _names(node_names, [r.op.u for r in records]),
        "v": _names(node_names, [r.op.v for r in records]),
        "w": _names(node_names, [r.op.w for r in records]),
        "rank": [r.op.rank for r in records],
        "p_o": [r.op.p_o for r in records],
        "delta": [r.delta for r in records],
        "Z": [r.Z for r in records],
        "ratio": [r.ratio for r in records],
        "wall_time_ms": [r.wall_time_ms for r in records],
    }, columns=TRACE_COLUMNS)
    _write_csv(frame, path)
    logger.debug("Wrote %d trace rows to %s", len(records), path)


def export_distribution(snapshot: DistributionSnapshot, path: str,
                        node_names: Optional[List[str]] = None) -> str:
    """Write node,z_normalized rows and the summary JSON beside them; returns the JSON path"""
    frame = pd.DataFrame({
        "node": _names(node_names, snapshot.nodes),
        "z_normalized": snapshot.values,
    }, columns=["node", "z_normalized"])
    _write_csv(frame, path)
    summary_path = os.path.splitext(path)[0] + ".json"
    write_json(snapshot.summary(), summary_path)
    return summary_path


def export_z(nodes: Sequence[int], z: np.ndarray, path: str,
             node_names: Optional[List[str]] = None) -> None:
    frame = pd.DataFrame({"node": _names(node_names, nodes), "z": np.asarray(z)},
                         columns=["node", "z"])
    _write_csv(frame, path)


def trace_summary(trace: OptimizationTrace) -> Dict[str, Any]:
    """Per-step extras that do not belong in the trace CSV"""
    return {
        "steps": [
            {
                "step": s.step,
                "z_before": s.z_before,
                "argmax": s.argmax,
                "zero_progress": s.zero_progress,
                "probes": s.probes,
                "evaluated": s.evaluated,
            }
            for s in trace.steps
        ],
    }
