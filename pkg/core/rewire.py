"""
Rewiring search: candidate generation under the quality floor, the pruned
optimal 1-rewiring search, the greedy k-rewiring driver and a brute-force optimum
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from config import get_config
from core.absorbing import (
    SegregationState,
    dense_oracle_z,
    graph_segregation,
    update_after_rewiring,
)
from core.errors import GraphValidationError, NoFeasibleTargetError, TooLargeForDenseOracleError
from core.graph import (
    RecGraph,
    RelevanceStore,
    apply_rewiring,
    revert_rewiring,
    slot_quality,
    validate_graph,
)

logger = logging.getLogger(__name__)

K_REACHED = "k_reached"
OMEGA_EXHAUSTED = "omega_exhausted"


@dataclass(frozen=True)
class RewiringOp:
    """Replace (u, v) by (u, w) at v's rank; score is s_uw, replaced_score is s_uv"""

    u: int
    v: int
    w: int
    p_o: float
    rank: int
    score: float = 0.0
    replaced_score: float = 0.0

    @property
    def key(self) -> Tuple[int, int, int]:
        return (self.u, self.v, self.w)


def make_op(graph: RecGraph, u: int, v: int, w: int, score: float) -> RewiringOp:
    rank = graph.rank_of(u, v)
    return RewiringOp(
        u=int(u), v=int(v), w=int(w),
        p_o=graph.discount.p(rank),
        rank=rank,
        score=float(score),
        replaced_score=float(graph.scores[u, rank - 1]),
    )


def neutral_targets(graph: RecGraph, relevance: RelevanceStore, u: int) -> Tuple[np.ndarray, np.ndarray]:
    """Neutral non-neighbours of u with positive relevance, ids ascending"""
    ids, vals = relevance.row(u)
    mask = (vals > 0) & ~graph.harmful_mask[ids] & ~np.isin(ids, graph.lists[u]) & (ids != u)
    return ids[mask], vals[mask]


def best_target(graph: RecGraph, relevance: RelevanceStore, u: int) -> int:
    """Highest-scored neutral non-neighbour of u; ties go to the lowest id"""
    ids, vals = neutral_targets(graph, relevance, u)
    if not len(ids):
        raise NoFeasibleTargetError(u)
    return int(ids[int(np.argmax(vals))])


def source_candidates(graph: RecGraph, relevance: RelevanceStore, tau: float,
                      u: int) -> Tuple[Optional[int], List[RewiringOp]]:
    """Best target of u and every harmful slot of u it may replace without breaking tau"""
    try:
        w = best_target(graph, relevance, u)
    except NoFeasibleTargetError:
        return None, []

    s_uw = relevance.score(u, w)
    ops = []
    for rank in range(1, graph.d + 1):
        v = int(graph.lists[u, rank - 1])
        if not graph.is_harmful(v):
            continue
        if slot_quality(graph, u, rank, s_uw) >= tau:
            ops.append(make_op(graph, u, v, w, s_uw))
    return w, ops


class CandidateSet:
    """Feasible operations grouped by source node"""

    def __init__(self):
        self.buckets: Dict[int, List[RewiringOp]] = {}
        self.targets: Dict[int, int] = {}

    def __len__(self) -> int:
        return sum(len(ops) for ops in self.buckets.values())

    def __bool__(self) -> bool:
        return any(self.buckets.values())

    def ops(self) -> List[RewiringOp]:
        return sorted((op for ops in self.buckets.values() for op in ops), key=lambda op: op.key)

    def sources(self) -> List[int]:
        return sorted(u for u, ops in self.buckets.items() if ops)

    def remove_source(self, u: int) -> None:
        self.buckets.pop(u, None)
        self.targets.pop(u, None)

    def regenerate(self, graph: RecGraph, relevance: RelevanceStore, tau: float, u: int) -> None:
        """Drop u's operations and rebuild them against u's current list"""
        self.remove_source(u)
        w, ops = source_candidates(graph, relevance, tau, u)
        if ops:
            self.buckets[u] = ops
            self.targets[u] = w


def generate_candidates(graph: RecGraph, relevance: RelevanceStore, tau: float) -> CandidateSet:
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"tau must lie in (0, 1] (got {tau})")
    candidates = CandidateSet()
    for u in graph.harmful_ids:
        candidates.regenerate(graph, relevance, tau, int(u))
    logger.info("Generated %d candidate operations over %d sources",
                len(candidates), len(candidates.buckets))
    return candidates


@dataclass
class HarmfulOrder:
    """Harmful nodes in descending z, ties by ascending id"""

    nodes: np.ndarray
    local: np.ndarray
    z: np.ndarray

    def __len__(self) -> int:
        return len(self.nodes)


def sorted_harmful(state: SegregationState) -> HarmfulOrder:
    local = np.lexsort((np.arange(len(state.z)), -state.z))
    return HarmfulOrder(nodes=state.view.harmful[local], local=local, z=state.z[local])


def _delta_scale(op: RewiringOp, state: SegregationState) -> Tuple[np.ndarray, float]:
    column = state.column(op.u)
    lv = state.view.index_of(op.v)
    return column, float(state.z[lv] / (1.0 / op.p_o + column[lv]))


def evaluate_delta(op: RewiringOp, state: SegregationState,
                   order: HarmfulOrder) -> Tuple[float, int]:
    """
    Decrease of Z caused by op, probing as few nodes as the z order allows

    Returns:
        tuple: (delta, number of per-node decrease evaluations)
    """
    column, scale = _delta_scale(op, state)
    z1 = float(order.z[0])
    z1_new = z1 - column[order.local[0]] * scale

    if len(order) == 1 or z1_new > order.z[1]:
        return z1 - z1_new, 1

    # nodes at or below z1_new cannot end up above it
    j = max(1, int(np.searchsorted(-order.z, -z1_new, side="left")))
    head = order.local[1:j]
    lowered = order.z[1:j] - column[head] * scale
    top = max(z1_new, float(lowered.max())) if len(lowered) else z1_new
    return z1 - top, j


def evaluate_delta_unpruned(op: RewiringOp, state: SegregationState) -> float:
    column, scale = _delta_scale(op, state)
    return float(state.z.max() - (state.z - column * scale).max())


@dataclass
class SearchResult:
    op: RewiringOp
    delta: float
    probes: int = 0
    evaluated: int = 0


def _better(delta: float, op: RewiringOp, best: Optional[SearchResult], tie_tol: float) -> bool:
    if best is None or delta > best.delta + tie_tol:
        return True
    return delta >= best.delta - tie_tol and op.key < best.op.key


def optimal_one_rewiring(graph: RecGraph, relevance: RelevanceStore, state: SegregationState,
                         tau: float, candidates: Optional[CandidateSet] = None,
                         order: Optional[HarmfulOrder] = None) -> Optional[SearchResult]:
    """
    Best single rewiring over the candidate set

    Candidates are visited in descending order of the upper bound p_o f_{h1 u} z_v
    and the scan stops once no remaining bound can reach the best decrease.

    Returns:
        SearchResult or None when there is no candidate
    """
    if candidates is None:
        candidates = generate_candidates(graph, relevance, tau)
    ops = candidates.ops()
    if not ops:
        return None
    if order is None:
        order = sorted_harmful(state)

    settings = get_config()
    top = float(order.z[0])
    tie_tol = settings.DELTA_TIE_TOL * max(1.0, top)
    margin = tie_tol + settings.BOUND_SLACK * max(1.0, top)

    row = state.row(int(order.nodes[0]))
    local = state.view.local
    bounds = np.array([op.p_o * row[local[op.u]] * state.z[local[op.v]] for op in ops])
    visit = np.lexsort((np.arange(len(ops)), -bounds))

    best: Optional[SearchResult] = None
    probes = 0
    evaluated = 0
    batch = settings.COLUMN_BATCH
    position = 0

    while position < len(visit):
        window = visit[position:position + batch]
        position += batch
        if best is not None and bounds[window[0]] + margin < best.delta:
            break
        state.prefetch(ops[i].u for i in window if bounds[i] > 0)
        stop = False
        for i in window:
            op = ops[i]
            if best is not None and bounds[i] + margin < best.delta:
                stop = True
                break
            if bounds[i] > 0:
                delta, used = evaluate_delta(op, state, order)
            else:
                delta, used = 0.0, 0
            probes += used
            evaluated += 1
            if _better(delta, op, best, tie_tol):
                best = SearchResult(op=op, delta=delta)
        if stop:
            break

    best.probes = probes
    best.evaluated = evaluated
    logger.debug("Search evaluated %d of %d candidates with %d probes", evaluated, len(ops), probes)
    return best


def brute_force_one_rewiring(graph: RecGraph, relevance: RelevanceStore, tau: float,
                             guard: int = 2000) -> Optional[SearchResult]:
    """Try every feasible op with every neutral target and recompute Z densely each time"""
    size = int(graph.harmful_mask.sum())
    if size > guard:
        raise TooLargeForDenseOracleError(size, guard)

    work = graph.copy()
    z0, _ = graph_segregation(dense_oracle_z(work, guard))
    tie_tol = get_config().DELTA_TIE_TOL * max(1.0, z0)
    best: Optional[SearchResult] = None
    evaluated = 0

    for u in work.harmful_ids:
        u = int(u)
        ids, vals = neutral_targets(work, relevance, u)
        for rank in range(1, work.d + 1):
            v = int(work.lists[u, rank - 1])
            if not work.is_harmful(v):
                continue
            for w, s_uw in zip(ids, vals):
                if slot_quality(work, u, rank, s_uw) < tau:
                    continue
                op = make_op(work, u, v, int(w), float(s_uw))
                apply_rewiring(work, op)
                try:
                    z_new, _ = graph_segregation(dense_oracle_z(work, guard))
                finally:
                    revert_rewiring(work, op)
                evaluated += 1
                delta = z0 - z_new
                if _better(delta, op, best, tie_tol):
                    best = SearchResult(op=op, delta=delta)

    if best is not None:
        best.evaluated = evaluated
    return best


@dataclass
class TraceStep:
    step: int
    op: RewiringOp
    delta: float
    z_before: float
    z_after: float
    ratio: float
    argmax: Optional[int]
    zero_progress: bool
    wall_time_ms: float = 0.0
    probes: int = 0
    evaluated: int = 0


@dataclass
class OptimizationTrace:
    algorithm: str
    z0: float
    steps: List[TraceStep] = field(default_factory=list)
    terminal_reason: str = K_REACHED

    @property
    def final_Z(self) -> float:
        return self.steps[-1].z_after if self.steps else self.z0

    @property
    def ratio(self) -> float:
        return self.final_Z / self.z0 if self.z0 > 0 else 1.0

    @property
    def ops(self) -> List[RewiringOp]:
        return [step.op for step in self.steps]

    @property
    def zero_progress_steps(self) -> int:
        return sum(1 for step in self.steps if step.zero_progress)

    @property
    def mean_probes(self) -> float:
        evaluated = sum(step.evaluated for step in self.steps)
        return sum(step.probes for step in self.steps) / evaluated if evaluated else 0.0

    @property
    def runtime_ms(self) -> float:
        return sum(step.wall_time_ms for step in self.steps)


def record_step(graph: RecGraph, state: SegregationState, trace: OptimizationTrace,
                op: RewiringOp, delta: Optional[float], started: float, timing: bool,
                probes: int = 0, evaluated: int = 0) -> TraceStep:
    """Apply op to graph and state and append the outcome to trace; delta None records the realised decrease"""
    z_before = state.Z
    apply_rewiring(graph, op)
    update_after_rewiring(state, op)
    z_after, argmax = graph_segregation(state.z, state.view.harmful)

    tie_tol = get_config().DELTA_TIE_TOL * max(1.0, z_before)
    step = TraceStep(
        step=len(trace.steps) + 1,
        op=op,
        delta=float(z_before - z_after if delta is None else delta),
        z_before=z_before,
        z_after=z_after,
        ratio=z_after / trace.z0 if trace.z0 > 0 else 1.0,
        argmax=argmax,
        zero_progress=z_before - z_after <= tie_tol,
        wall_time_ms=(time.perf_counter() - started) * 1000.0 if timing else 0.0,
        probes=probes,
        evaluated=evaluated,
    )
    trace.steps.append(step)
    logger.info("Step %d [%s]: (%d, %d) -> %d at rank %d, Z %.6f -> %.6f%s",
                step.step, trace.algorithm, op.u, op.v, op.w, op.rank, z_before, z_after,
                " (no progress)" if step.zero_progress else "")
    return step


def prepare_state(graph: RecGraph, state: Optional[SegregationState], tol: float,
                  max_iter: Optional[int], threads: int,
                  cache_limit: Optional[int]) -> SegregationState:
    report = validate_graph(graph)
    if not report.ok:
        raise GraphValidationError(report)
    if state is None:
        state = SegregationState.from_graph(graph, tol, max_iter, cache_limit, threads)
    return state


def heuristic_k_rewiring(graph: RecGraph, relevance: RelevanceStore, tau: float, k: int,
                         state: Optional[SegregationState] = None, tol: float = 1e-8,
                         max_iter: Optional[int] = None, threads: int = 1,
                         cache_limit: Optional[int] = None,
                         timing: bool = True) -> OptimizationTrace:
    """
    Greedy k-rewiring: apply the best single operation k times

    Args:
        graph: Graph to rewire in place
        relevance: Relevance store the graph was built from
        tau: Quality floor
        k: Maximum number of operations
        state: Segregation state consistent with graph; built when omitted

    Returns:
        OptimizationTrace: One step per applied operation
    """
    state = prepare_state(graph, state, tol, max_iter, threads, cache_limit)
    candidates = generate_candidates(graph, relevance, tau)
    trace = OptimizationTrace(algorithm="heu", z0=state.Z)

    for _ in range(k):
        if not candidates:
            trace.terminal_reason = OMEGA_EXHAUSTED
            logger.info("Candidate set exhausted after %d steps", len(trace.steps))
            break
        started = time.perf_counter()
        result = optimal_one_rewiring(graph, relevance, state, tau, candidates)
        record_step(graph, state, trace, result.op, result.delta, started, timing,
                    result.probes, result.evaluated)
        candidates.regenerate(graph, relevance, tau, result.op.u)

    return trace


def brute_force_k_rewiring(graph: RecGraph, relevance: RelevanceStore, tau: float, k: int,
                           guard: int = 2000, state: Optional[SegregationState] = None,
                           tol: float = 1e-8, max_iter: Optional[int] = None,
                           timing: bool = True) -> OptimizationTrace:
    """Greedy k-rewiring with every step chosen by exhaustive dense recomputation"""
    state = prepare_state(graph, state, tol, max_iter, 1, None)
    trace = OptimizationTrace(algorithm="brute", z0=state.Z)

    for _ in range(k):
        started = time.perf_counter()
        result = brute_force_one_rewiring(graph, relevance, tau, guard)
        if result is None:
            trace.terminal_reason = OMEGA_EXHAUSTED
            break
        record_step(graph, state, trace, result.op, result.delta, started, timing,
                    evaluated=result.evaluated)

    return trace
