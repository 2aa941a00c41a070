"""
verify: oracle cross-checks on a graph dump
"""

import logging
from typing import Any, Dict, Optional

import numpy as np

from commands import (
    EXIT_CHECK_FAILED,
    EXIT_OK,
    add_run_options,
    load_graph_with_relevance,
    output_path,
    resolve_config,
)
from config import RunConfig
from core.absorbing import (
    SegregationState,
    absorbing_view,
    delta_segregation,
    dense_oracle_z,
    monte_carlo_hitting,
    segregation_vector,
)
from core.errors import GraphValidationError, TooLargeForDenseOracleError
from core.graph import RecGraph, RelevanceStore, apply_rewiring, validate_graph
from core.metrics import export_z, write_json
from core.rewire import generate_candidates
from core.storage import GraphRepository

logger = logging.getLogger(__name__)

DENSE_ABS_TOL = 1e-6
DELTA_REL_TOL = 1e-6
MC_SIGMAS = 4.0
MC_PASS_SHARE = 0.95


def register(subparsers) -> None:
    parser = subparsers.add_parser("verify", help="cross-check solvers against independent oracles")
    parser.add_argument("graph", help="graph dump written by build or optimize")
    parser.add_argument("--relevance", help="CSV with src,dst,score; enables the rewiring check")
    parser.add_argument("--dump-z", dest="dump_z", help="write node,z to this path")
    add_run_options(parser)
    parser.set_defaults(handler=cmd_verify)


def check_dense(graph: RecGraph, state: SegregationState, config: RunConfig) -> Dict[str, Any]:
    try:
        exact = dense_oracle_z(graph, config.guard)
    except TooLargeForDenseOracleError as e:
        return {"status": "skipped", "reason": str(e)}
    error = float(np.max(np.abs(state.z - exact))) if len(exact) else 0.0
    tolerance = max(DENSE_ABS_TOL, 10 * config.tol)
    passed = error <= tolerance
    return {"status": "passed" if passed else "failed", "max_abs_error": error, "tolerance": tolerance}


def check_rewiring_updates(graph: RecGraph, relevance: RelevanceStore, state: SegregationState,
                           config: RunConfig) -> Dict[str, Any]:
    """Predicted per-node decreases against a full recomputation on the edited graph"""
    ops = generate_candidates(graph, relevance, config.tau).ops()
    if not ops:
        return {"status": "skipped", "reason": "no feasible rewiring"}

    rng = np.random.default_rng(config.seed)
    picked = rng.choice(len(ops), size=min(config.samples, len(ops)), replace=False)
    worst = 0.0
    for i in sorted(picked):
        op = ops[i]
        predicted = state.z - np.array([delta_segregation(int(h), op, state) for h in state.view.harmful])
        edited = graph.copy()
        apply_rewiring(edited, op)
        recomputed = segregation_vector(absorbing_view(edited), config.tol, config.max_iter)
        worst = max(worst, float(np.max(np.abs(predicted - recomputed) / np.maximum(recomputed, 1.0))))
    passed = worst <= DELTA_REL_TOL
    return {"status": "passed" if passed else "failed", "ops": len(picked), "max_rel_error": worst}


def check_monte_carlo(graph: RecGraph, state: SegregationState, config: RunConfig) -> Dict[str, Any]:
    rng = np.random.default_rng(config.seed)
    harmful = state.view.harmful
    if not len(harmful):
        return {"status": "skipped", "reason": "no harmful nodes"}
    nodes = np.sort(rng.choice(harmful, size=min(config.samples, len(harmful)), replace=False))

    rows = []
    for i, u in enumerate(nodes):
        estimate = monte_carlo_hitting(graph, int(u), config.trials, config.seed + i,
                                       segregation=state.Z)
        analytic = state.z_of(int(u))
        slack = max(MC_SIGMAS * estimate.std_error, 1e-9)
        rows.append({
            "node": graph.node_names[int(u)],
            "analytic": analytic,
            "mean": estimate.mean,
            "std_error": estimate.std_error,
            "capped": estimate.capped,
            "within": abs(estimate.mean - analytic) <= slack,
        })
    within = sum(1 for row in rows if row["within"])
    passed = within >= MC_PASS_SHARE * len(rows)
    return {"status": "passed" if passed else "failed", "within": within, "sampled": len(rows),
            "nodes": rows}


def cmd_verify(args) -> int:
    config = resolve_config(args)
    relevance: Optional[RelevanceStore] = None
    if args.relevance:
        graph, relevance = load_graph_with_relevance(args.graph, args.relevance)
    else:
        graph = GraphRepository().load(args.graph)

    report = validate_graph(graph)
    if not report.ok:
        raise GraphValidationError(report)

    state = SegregationState.from_graph(graph, config.tol, config.max_iter,
                                        config.cache_limit, config.threads)
    if args.dump_z:
        export_z(state.view.harmful, state.z, args.dump_z, graph.node_names)

    checks = {
        "validation": {"status": "passed", "report": report.to_dict()},
        "dense_oracle": check_dense(graph, state, config),
        "monte_carlo": check_monte_carlo(graph, state, config),
    }
    if relevance is not None:
        checks["rewiring_update"] = check_rewiring_updates(graph, relevance, state, config)

    failed = sorted(name for name, check in checks.items() if check["status"] == "failed")
    write_json({"Z": state.Z, "checks": checks, "failed": failed}, output_path(config, "verify.json"))

    for name, check in sorted(checks.items()):
        logger.info("%s: %s", name, check["status"])
        print(f"{name}: {check['status']}")
    return EXIT_CHECK_FAILED if failed else EXIT_OK
