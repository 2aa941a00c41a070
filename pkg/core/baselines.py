"""
Comparison strategies: top-k by initial decrease, top-k among the most
segregated sources, and uniformly random operations
"""

import logging
import time
from typing import Iterable, List, Optional, Tuple

import numpy as np

from core.absorbing import SegregationState
from core.graph import RecGraph, RelevanceStore, slot_quality
from core.rewire import (
    K_REACHED,
    OMEGA_EXHAUSTED,
    OptimizationTrace,
    RewiringOp,
    evaluate_delta,
    generate_candidates,
    prepare_state,
    record_step,
    sorted_harmful,
)

logger = logging.getLogger(__name__)


def still_feasible(graph: RecGraph, op: RewiringOp, tau: float) -> Tuple[bool, str]:
    """Recheck an op selected against an earlier graph"""
    if graph.lists[op.u, op.rank - 1] != op.v:
        return False, "slot already rewired"
    if graph.has_edge(op.u, op.w):
        return False, "target already listed"
    if slot_quality(graph, op.u, op.rank, op.score) < tau:
        return False, "quality floor"
    return True, ""


def _apply_sequence(graph: RecGraph, state: SegregationState, tau: float, k: int,
                    ranked: Iterable[RewiringOp], trace: OptimizationTrace,
                    timing: bool, started: float) -> OptimizationTrace:
    if k <= 0:
        return trace
    for op in ranked:
        feasible, reason = still_feasible(graph, op, tau)
        if not feasible:
            logger.warning("Skipping (%d, %d, %d) at rank %d: %s", op.u, op.v, op.w, op.rank, reason)
            continue
        record_step(graph, state, trace, op, None, started, timing)
        started = time.perf_counter()
        if len(trace.steps) >= k:
            trace.terminal_reason = K_REACHED
            return trace
    trace.terminal_reason = OMEGA_EXHAUSTED
    return trace


def _rank_by_initial_delta(ops: List[RewiringOp], state: SegregationState) -> List[RewiringOp]:
    order = sorted_harmful(state)
    state.prefetch(op.u for op in ops)
    scored = [(evaluate_delta(op, state, order)[0], op) for op in ops]
    scored.sort(key=lambda item: (-item[0], item[1].key))
    return [op for _, op in scored]


def baseline_bsl1(graph: RecGraph, relevance: RelevanceStore, state: Optional[SegregationState],
                  tau: float, k: int, tol: float = 1e-8, max_iter: Optional[int] = None,
                  threads: int = 1, cache_limit: Optional[int] = None,
                  timing: bool = True) -> OptimizationTrace:
    """Score every candidate once against the initial state and apply the top k"""
    state = prepare_state(graph, state, tol, max_iter, threads, cache_limit)
    trace = OptimizationTrace(algorithm="bsl1", z0=state.Z)
    if k <= 0:
        return trace
    started = time.perf_counter()
    ranked = _rank_by_initial_delta(generate_candidates(graph, relevance, tau).ops(), state)
    return _apply_sequence(graph, state, tau, k, ranked, trace, timing, started)


def baseline_bsl2(graph: RecGraph, relevance: RelevanceStore, state: Optional[SegregationState],
                  tau: float, k: int, tol: float = 1e-8, max_iter: Optional[int] = None,
                  threads: int = 1, cache_limit: Optional[int] = None,
                  timing: bool = True) -> OptimizationTrace:
    """Restrict to the k sources with the largest initial z, then rank by initial decrease"""
    state = prepare_state(graph, state, tol, max_iter, threads, cache_limit)
    trace = OptimizationTrace(algorithm="bsl2", z0=state.Z)
    if k <= 0:
        return trace
    started = time.perf_counter()
    top_sources = {int(u) for u in sorted_harmful(state).nodes[:k]}
    ops = [op for op in generate_candidates(graph, relevance, tau).ops() if op.u in top_sources]
    ranked = _rank_by_initial_delta(ops, state)
    return _apply_sequence(graph, state, tau, k, ranked, trace, timing, started)


def baseline_rnd(graph: RecGraph, relevance: RelevanceStore, tau: float, k: int, seed: int,
                 state: Optional[SegregationState] = None, tol: float = 1e-8,
                 max_iter: Optional[int] = None, threads: int = 1,
                 cache_limit: Optional[int] = None, timing: bool = True) -> OptimizationTrace:
    """Apply candidates in a seeded uniform random order"""
    state = prepare_state(graph, state, tol, max_iter, threads, cache_limit)
    trace = OptimizationTrace(algorithm="rnd", z0=state.Z)
    if k <= 0:
        return trace
    started = time.perf_counter()
    ops = generate_candidates(graph, relevance, tau).ops()
    permutation = np.random.default_rng(seed).permutation(len(ops))
    return _apply_sequence(graph, state, tau, k, (ops[i] for i in permutation), trace,
                           timing, started)
