"""
optimize: run one rewiring strategy on a graph dump and export its artifacts
"""

import logging
import time

from commands import (
    EXIT_EMPTY_CANDIDATES,
    EXIT_OK,
    add_run_options,
    load_graph_with_relevance,
    output_path,
    resolve_config,
)
from config import RunConfig
from core.absorbing import SegregationState
from core.baselines import baseline_bsl1, baseline_bsl2, baseline_rnd
from core.errors import GraphValidationError
from core.graph import RecGraph, RelevanceStore, validate_graph
from core.metrics import (
    export_distribution,
    export_trace,
    export_z,
    gini_in_degree,
    quality_audit,
    snapshot_distribution,
    trace_summary,
    write_json,
)
from core.rewire import (
    OptimizationTrace,
    brute_force_k_rewiring,
    generate_candidates,
    heuristic_k_rewiring,
)
from core.storage import GraphRepository

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("optimize", help="rewire a graph to lower its segregation")
    parser.add_argument("graph", help="graph dump written by build")
    parser.add_argument("relevance", help="CSV with src,dst,score")
    add_run_options(parser)
    parser.set_defaults(handler=cmd_optimize)


def run_algorithm(graph: RecGraph, relevance: RelevanceStore, state: SegregationState,
                  config: RunConfig) -> OptimizationTrace:
    """Dispatch to the configured strategy; graph and state are rewired in place"""
    common = dict(tol=config.tol, max_iter=config.max_iter, timing=config.timing)
    if config.algorithm == "heu":
        return heuristic_k_rewiring(graph, relevance, config.tau, config.k, state=state,
                                    threads=config.threads, cache_limit=config.cache_limit, **common)
    if config.algorithm == "bsl1":
        return baseline_bsl1(graph, relevance, state, config.tau, config.k,
                             threads=config.threads, cache_limit=config.cache_limit, **common)
    if config.algorithm == "bsl2":
        return baseline_bsl2(graph, relevance, state, config.tau, config.k,
                             threads=config.threads, cache_limit=config.cache_limit, **common)
    if config.algorithm == "rnd":
        return baseline_rnd(graph, relevance, config.tau, config.k, config.seed, state=state,
                            threads=config.threads, cache_limit=config.cache_limit, **common)
    return brute_force_k_rewiring(graph, relevance, config.tau, config.k, guard=config.guard,
                                  state=state, **common)


def cmd_optimize(args) -> int:
    config = resolve_config(args)
    graph, relevance = load_graph_with_relevance(args.graph, args.relevance)

    report = validate_graph(graph)
    if not report.ok:
        raise GraphValidationError(report)

    started = time.perf_counter()
    state = SegregationState.from_graph(graph, config.tol, config.max_iter,
                                        config.cache_limit, config.threads)
    z0 = state.Z
    if config.k > 0 and not generate_candidates(graph, relevance, config.tau):
        logger.error("No feasible rewiring at tau=%.4f", config.tau)
        return EXIT_EMPTY_CANDIDATES

    names = graph.node_names
    scale = z0 if z0 > 0 else 1.0
    before = snapshot_distribution(state, scale)
    export_z(state.view.harmful, state.z, output_path(config, "z_before.csv"), names)
    export_distribution(before, output_path(config, "distribution_before.csv"), names)

    trace = run_algorithm(graph, relevance, state, config)
    runtime_ms = (time.perf_counter() - started) * 1000.0 if config.timing else 0.0

    after = snapshot_distribution(state, scale)
    export_z(state.view.harmful, state.z, output_path(config, "z_after.csv"), names)
    export_distribution(after, output_path(config, "distribution_after.csv"), names)
    export_trace(trace, output_path(config, "trace.csv"), names)
    GraphRepository().save(graph, output_path(config, "graph_rewired.csv"))

    audit = quality_audit(graph, relevance, config.tau)
    summary = {
        "algorithm": config.algorithm,
        "initial_Z": z0,
        "final_Z": trace.final_Z,
        "ratio": trace.ratio,
        "ops": len(trace.steps),
        "terminal_reason": trace.terminal_reason,
        "runtime_ms": runtime_ms,
        "zero_progress_steps": trace.zero_progress_steps,
        "mean_probes": trace.mean_probes,
        "gini_in_degree_harmful": gini_in_degree(graph, "harmful") if state.view.size else None,
        "quality_min": audit.min_quality,
        "quality_audit": audit.to_dict(),
        "trace": trace_summary(trace),
    }
    write_json(summary, output_path(config, "summary.json"))

    logger.info("%s finished: Z %.6f -> %.6f (ratio %.4f) after %d ops, %s",
                config.algorithm, z0, trace.final_Z, trace.ratio, len(trace.steps),
                trace.terminal_reason)
    print(f"final_Z={trace.final_Z:.10g} ratio={trace.ratio:.10g} ops={len(trace.steps)}")
    return EXIT_OK
