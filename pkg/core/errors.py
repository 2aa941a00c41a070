"""
Exception hierarchy for the segregation engine
"""

from typing import Any, Iterable, List, Optional


class SegraError(Exception):
    """Base class for every error raised by the engine"""


class ConfigurationError(SegraError, ValueError):
    """Run configuration failed validation"""


class InputFormatError(SegraError, ValueError):
    """An input file is missing columns or holds unparseable rows"""


class InvalidScoreError(SegraError, ValueError):
    """A relevance score lies outside [0, 1] or is duplicated"""


class NodeWithFewerThanDCandidatesError(SegraError, ValueError):
    def __init__(self, node: int, available: int, d: int):
        self.node = node
        self.available = available
        self.d = d
        super().__init__(
            f"Node {node} has {available} positive-relevance candidates, {d} required"
        )


class EdgeNotFoundError(SegraError, KeyError):
    def __init__(self, u: int, v: int):
        self.u = u
        self.v = v
        super().__init__(f"Edge ({u}, {v}) is not in the graph")

    def __str__(self) -> str:
        return self.args[0]


class ZeroIdealDcgError(SegraError, ValueError):
    def __init__(self, node: int):
        self.node = node
        super().__init__(f"Node {node} has no positive-score slots in its original list")


class PreconditionViolatedError(SegraError, ValueError):
    """A rewiring operation failed one of its preconditions"""

    def __init__(self, check: str, message: str):
        self.check = check
        super().__init__(f"{check}: {message}")


class GraphValidationError(SegraError, ValueError):
    def __init__(self, report: Any):
        self.report = report
        super().__init__(f"Graph validation failed: {', '.join(report.problems())}")


class UnreachableHarmfulComponentError(SegraError, ValueError):
    def __init__(self, nodes: Iterable[int]):
        self.nodes: List[int] = sorted(int(n) for n in nodes)
        preview = ", ".join(str(n) for n in self.nodes[:10])
        more = "" if len(self.nodes) <= 10 else f" (+{len(self.nodes) - 10} more)"
        super().__init__(f"Harmful nodes cannot reach any neutral node: {preview}{more}")


class NotConvergedError(SegraError, RuntimeError):
    def __init__(self, max_iter: int, residual: Optional[float] = None):
        self.max_iter = max_iter
        self.residual = residual
        detail = "" if residual is None else f" (last step {residual:.3e})"
        super().__init__(f"Fixed-point iteration did not converge in {max_iter} iterations{detail}")


class ColumnUnavailableError(SegraError, RuntimeError):
    def __init__(self, node: int, cause: Exception):
        self.node = node
        super().__init__(f"Fundamental column of node {node} unavailable: {cause}")


class TooLargeForDenseOracleError(SegraError, ValueError):
    def __init__(self, size: int, guard: int):
        self.size = size
        self.guard = guard
        super().__init__(f"{size} harmful nodes exceed the dense oracle guard of {guard}")


class SingularSystemError(SegraError, ValueError):
    """(I - M_hh) is singular: some harmful component never reaches neutral content"""


class NoFeasibleTargetError(SegraError, ValueError):
    def __init__(self, node: int):
        self.node = node
        super().__init__(f"Node {node} has no neutral non-neighbour with positive relevance")


class EmptySubsetError(SegraError, ValueError):
    """A metric was asked for over an empty node subset"""
