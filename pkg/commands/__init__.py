"""
Command groups of the segra CLI and the option handling they share
"""

import argparse
import logging
import os
from typing import Tuple

from config import RunConfig
from core.graph import RecGraph, RelevanceStore
from core.storage import GraphRepository, read_relevance

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_VALIDATION = 2
EXIT_NOT_CONVERGED = 3
EXIT_EMPTY_CANDIDATES = 4
EXIT_CHECK_FAILED = 5


def add_run_options(parser: argparse.ArgumentParser) -> None:
    """Flags mirroring every RunConfig key; unset flags leave the file or default value"""
    group = parser.add_argument_group("run configuration")
    group.add_argument("--config", help="key=value configuration file")
    group.add_argument("--d", type=int, help="out-degree of the recommendation graph")
    group.add_argument("--tau", type=float, help="quality floor in (0, 1]")
    group.add_argument("--k", type=int, help="maximum number of rewiring operations")
    group.add_argument("--discount", help="rank discount: uniform or invlog")
    group.add_argument("--tol", type=float, help="fixed-point tolerance (max-norm)")
    group.add_argument("--max-iter", dest="max_iter", type=int, help="fixed-point iteration cap")
    group.add_argument("--seed", type=int, help="random seed")
    group.add_argument("--algorithm", help="heu, bsl1, bsl2, rnd or brute")
    group.add_argument("--threads", type=int, help="worker threads for column solves")
    group.add_argument("--guard", type=int, help="harmful-node cap for dense oracles")
    group.add_argument("--out-dir", dest="out_dir", help="output directory")
    group.add_argument("--cache-limit", dest="cache_limit", type=int, help="LRU cap on cached columns")
    group.add_argument("--timing", action=argparse.BooleanOptionalAction, default=None,
                       help="record wall-clock times (disable for byte-identical outputs)")
    group.add_argument("--trials", type=int, help="Monte-Carlo walks per sampled node")
    group.add_argument("--samples", type=int, help="nodes or operations sampled by verify")
    group.add_argument("--taus", help="comma-separated quality floors for sweep")


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, then the config file, then flags; validated before any work"""
    config = RunConfig.from_file(args.config) if getattr(args, "config", None) else RunConfig()
    overrides = {key: getattr(args, key, None) for key in RunConfig.keys()}
    if isinstance(overrides.get("taus"), str):
        overrides["taus"] = RunConfig.parse_value("taus", overrides["taus"])
    config = config.merged(overrides)
    config.validate()
    logger.debug("Run configuration: %s", config)
    return config


def load_graph_with_relevance(graph_path: str, relevance_path: str) -> Tuple[RecGraph, RelevanceStore]:
    repository = GraphRepository()
    names = repository.node_names(graph_path)
    relevance = read_relevance(relevance_path, names)
    return repository.load(graph_path, relevance), relevance


def output_path(config: RunConfig, name: str) -> str:
    os.makedirs(config.out_dir, exist_ok=True)
    return os.path.join(config.out_dir, name)
