"""
Segra - segregation-minimizing rewiring engine for recommendation graphs
Command-line entry point: build, optimize, verify, gadget and the experiment helpers
"""

import argparse
import logging
import os
import sys
from typing import List, Optional

from commands import EXIT_INPUT, EXIT_NOT_CONVERGED, EXIT_VALIDATION
from commands import build, experiments, gadget, optimize, verify
from config import get_config
from core.errors import (
    ColumnUnavailableError,
    ConfigurationError,
    EdgeNotFoundError,
    GraphValidationError,
    InputFormatError,
    InvalidScoreError,
    NoFeasibleTargetError,
    NodeWithFewerThanDCandidatesError,
    NotConvergedError,
    SingularSystemError,
    UnreachableHarmfulComponentError,
    ZeroIdealDcgError,
)

logger = logging.getLogger("segra")

# exception families mapped to process exit codes, checked in order
EXIT_CODES = (
    ((GraphValidationError, UnreachableHarmfulComponentError, SingularSystemError), EXIT_VALIDATION),
    ((NotConvergedError, ColumnUnavailableError), EXIT_NOT_CONVERGED),
    ((ConfigurationError, InputFormatError, InvalidScoreError, NodeWithFewerThanDCandidatesError,
      ZeroIdealDcgError, NoFeasibleTargetError, EdgeNotFoundError), EXIT_INPUT),
    ((OSError, ValueError), EXIT_INPUT),
)
HANDLED_ERRORS = tuple(error for families, _ in EXIT_CODES for error in families)


class SegraArgumentParser(argparse.ArgumentParser):
    """Usage errors exit with the input-error code instead of argparse's 2"""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def configure_logging(level: Optional[str] = None) -> None:
    level = (level or get_config().SEGRA_LOG or "INFO").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format="%(levelname)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )


def create_parser() -> argparse.ArgumentParser:
    """Parser factory with every command group registered"""
    parser = SegraArgumentParser(prog="segra", description=__doc__.strip().splitlines()[0])
    subparsers = parser.add_subparsers(dest="command", required=True,
                                       parser_class=SegraArgumentParser)
    for module in (build, optimize, verify, gadget, experiments):
        module.register(subparsers)
    return parser


def exit_code_for(error: BaseException) -> int:
    for families, code in EXIT_CODES:
        if isinstance(error, families):
            return code
    raise error


def main(argv: Optional[List[str]] = None) -> int:
    configure_logging(os.environ.get("SEGRA_LOG"))
    args = create_parser().parse_args(argv)
    try:
        return args.handler(args)
    except HANDLED_ERRORS as e:
        code = exit_code_for(e)
        logger.error("%s failed: %s", args.command, e)
        return code


if __name__ == "__main__":
    sys.exit(main())
