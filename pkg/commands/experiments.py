"""
Experiment helpers: synthetic instance generation, quality-floor sweeps and
scaling profiles
"""

import logging
import time
from typing import Any, Dict, List

import numpy as np
import pandas as pd

from commands import (
    EXIT_OK,
    add_run_options,
    load_graph_with_relevance,
    output_path,
    resolve_config,
)
from config import RunConfig
from core.absorbing import SegregationState
from core.graph import apply_rewiring
from core.metrics import write_json
from core.rewire import generate_candidates, heuristic_k_rewiring, optimal_one_rewiring
from core.storage import write_instance
from core.synthetic import SyntheticInstance, homophilous_instance, random_instance

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = ["step", "tau", "Z", "ratio"]


def register(subparsers) -> None:
    generate = subparsers.add_parser("generate", help="write a synthetic relevance instance")
    generate.add_argument("--n", type=int, default=200, help="node count")
    generate.add_argument("--kind", choices=["random", "homophilous"], default="homophilous")
    generate.add_argument("--harmful-fraction", dest="harmful_fraction", type=float, default=0.5)
    generate.add_argument("--within-block", dest="within_block", type=float, default=0.9)
    add_run_options(generate)
    generate.set_defaults(handler=cmd_generate)

    sweep = subparsers.add_parser("sweep", help="run the heuristic for several quality floors")
    sweep.add_argument("graph", help="graph dump written by build")
    sweep.add_argument("relevance", help="CSV with src,dst,score")
    add_run_options(sweep)
    sweep.set_defaults(handler=cmd_sweep)

    bench = subparsers.add_parser("bench", help="time one heuristic iteration across graph sizes")
    bench.add_argument("--sizes", default="1000,10000,100000", help="comma-separated node counts")
    bench.add_argument("--within-block", dest="within_block", type=float, default=0.9)
    add_run_options(bench)
    bench.set_defaults(handler=cmd_bench)


def make_instance(kind: str, n: int, config: RunConfig, harmful_fraction: float = 0.5,
                  within_block: float = 0.9) -> SyntheticInstance:
    if kind == "random":
        return random_instance(n, config.d, harmful_fraction, config.seed)
    return homophilous_instance(n, config.d, within_block, harmful_fraction, config.seed)


def cmd_generate(args) -> int:
    config = resolve_config(args)
    instance = make_instance(args.kind, args.n, config, args.harmful_fraction, args.within_block)
    relevance_path, labels_path = write_instance(instance.relevance, instance.labels,
                                                 instance.names, config.out_dir)
    print(relevance_path)
    print(labels_path)
    return EXIT_OK


def tau_sweep(graph_path: str, relevance_path: str, config: RunConfig) -> pd.DataFrame:
    """Heuristic trajectory per quality floor, each from a fresh copy of the graph"""
    rows: List[Dict[str, Any]] = []
    for tau in config.taus:
        graph, relevance = load_graph_with_relevance(graph_path, relevance_path)
        trace = heuristic_k_rewiring(graph, relevance, tau, config.k, tol=config.tol,
                                     max_iter=config.max_iter, threads=config.threads,
                                     cache_limit=config.cache_limit, timing=False)
        rows.append({"step": 0, "tau": tau, "Z": trace.z0, "ratio": 1.0})
        rows.extend({"step": s.step, "tau": tau, "Z": s.z_after, "ratio": s.ratio} for s in trace.steps)
        logger.info("tau=%.4f: ratio %.4f after %d ops (%s)", tau, trace.ratio,
                    len(trace.steps), trace.terminal_reason)
    return pd.DataFrame(rows, columns=SWEEP_COLUMNS)


def cmd_sweep(args) -> int:
    config = resolve_config(args)
    frame = tau_sweep(args.graph, args.relevance, config)
    frame.to_csv(output_path(config, "sweep.csv"), index=False, lineterminator="\n")
    final = frame.groupby("tau", sort=True)["ratio"].last()
    for tau, ratio in final.items():
        print(f"tau={tau:g} ratio={ratio:.10g}")
    return EXIT_OK


def time_iteration(instance: SyntheticInstance, config: RunConfig) -> Dict[str, Any]:
    """Wall time of one search-and-apply step on a fresh state"""
    graph = instance.graph(config.discount)
    state = SegregationState.from_graph(graph, config.tol, config.max_iter,
                                        config.cache_limit, config.threads)
    candidates = generate_candidates(graph, instance.relevance, config.tau)
    started = time.perf_counter()
    result = optimal_one_rewiring(graph, instance.relevance, state, config.tau, candidates)
    if result is not None:
        apply_rewiring(graph, result.op)
    elapsed_ms = (time.perf_counter() - started) * 1000.0
    return {
        "n": graph.n,
        "harmful": state.view.size,
        "candidates": len(candidates),
        "iteration_ms": elapsed_ms,
        "evaluated": result.evaluated if result else 0,
        "mean_probes": result.probes / result.evaluated if result and result.evaluated else 0.0,
    }


def scaling_profile(sizes: List[int], config: RunConfig, within_block: float = 0.9) -> Dict[str, Any]:
    runs = []
    for n in sizes:
        instance = homophilous_instance(n, config.d, within_block, 0.5, config.seed)
        runs.append(time_iteration(instance, config))
        logger.info("n=%d: %.1f ms per iteration", n, runs[-1]["iteration_ms"])

    slope = None
    if len(runs) >= 2:
        x = np.log([r["n"] for r in runs])
        y = np.log([max(r["iteration_ms"], 1e-6) for r in runs])
        slope = float(np.polyfit(x, y, 1)[0])
    return {"runs": runs, "log_log_slope": slope}


def cmd_bench(args) -> int:
    config = resolve_config(args)
    sizes = [int(part) for part in args.sizes.split(",") if part.strip()]
    profile = scaling_profile(sizes, config, args.within_block)
    write_json(profile, output_path(config, "bench.json"))
    print(f"log_log_slope={profile['log_log_slope']}")
    return EXIT_OK
