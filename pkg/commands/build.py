"""
build: relevance + labels -> graph dump, remap sidecar and validation report
"""

import logging

from commands import EXIT_OK, EXIT_VALIDATION, add_run_options, output_path, resolve_config
from core.graph import RankDiscount, build_top_d_graph, validate_graph
from core.metrics import write_json
from core.storage import GraphRepository, load_inputs

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("build", help="build the top-d recommendation graph")
    parser.add_argument("relevance", help="CSV with src,dst,score")
    parser.add_argument("labels", help="CSV with node,label")
    parser.add_argument("--output", default="graph.csv", help="dump file name inside --out-dir")
    add_run_options(parser)
    parser.set_defaults(handler=cmd_build)


def cmd_build(args) -> int:
    config = resolve_config(args)
    names, labels, relevance = load_inputs(args.relevance, args.labels)

    graph = build_top_d_graph(relevance, labels, config.d,
                              RankDiscount.create(config.discount, config.d), names)
    report = validate_graph(graph)

    paths = GraphRepository().save(graph, output_path(config, args.output))
    report_path = output_path(config, "validation.json")
    write_json(report.to_dict(), report_path)

    if not report.ok:
        logger.error("Graph validation failed: %s", "; ".join(report.problems()))
        return EXIT_VALIDATION

    print(paths["graph"])
    return EXIT_OK
