"""
Absorbing random-walk engine: segregation scores, fundamental-matrix columns,
rank-one updates after rewiring and independent oracles
"""

import logging
import math
import threading
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import TYPE_CHECKING, Dict, Iterable, List, Optional, Tuple

import numpy as np
from scipy import sparse

from config import get_config
from core.errors import (
    ColumnUnavailableError,
    NotConvergedError,
    SingularSystemError,
    TooLargeForDenseOracleError,
    UnreachableHarmfulComponentError,
)
from core.graph import RecGraph, unreachable_harmful

if TYPE_CHECKING:
    from core.rewire import RewiringOp

logger = logging.getLogger(__name__)

AUTO_PROBE_ITERATIONS = 100


class AbsorbingView:
    """Harmful-to-harmful block M_hh of the transition matrix"""

    def __init__(self, harmful: np.ndarray, local: np.ndarray, matrix: sparse.csr_matrix):
        self.harmful = harmful
        self.local = local
        self.matrix = matrix
        self._transpose: Optional[sparse.csr_matrix] = None

    @property
    def size(self) -> int:
        return len(self.harmful)

    @property
    def transpose(self) -> sparse.csr_matrix:
        if self._transpose is None:
            self._transpose = self.matrix.T.tocsr()
        return self._transpose

    def index_of(self, node: int) -> int:
        idx = int(self.local[node])
        if idx < 0:
            raise ValueError(f"Node {node} is not harmful")
        return idx

    def remove_transition(self, u: int, v: int) -> None:
        """Zero the (u, v) entry in place; the CSR pattern is left untouched"""
        row = self.index_of(u)
        col = self.index_of(v)
        start, end = self.matrix.indptr[row], self.matrix.indptr[row + 1]
        cols = self.matrix.indices[start:end]
        hits = np.flatnonzero(cols == col)
        if not len(hits):
            raise ValueError(f"No harmful transition ({u}, {v}) to remove")
        self.matrix.data[start + hits[0]] = 0.0
        self._transpose = None


def _transition_block(graph: RecGraph) -> AbsorbingView:
    harmful = graph.harmful_ids
    local = np.full(graph.n, -1, dtype=np.int64)
    local[harmful] = np.arange(len(harmful))

    sub_lists = graph.lists[harmful]
    ranks = np.tile(np.arange(graph.d), len(harmful))
    rows = np.repeat(np.arange(len(harmful)), graph.d)
    targets = sub_lists.ravel()
    keep = local[targets] >= 0
    probs = np.asarray(graph.discount.table, dtype=np.float64)[ranks[keep]]

    matrix = sparse.csr_matrix(
        (probs, (rows[keep], local[targets[keep]])),
        shape=(len(harmful), len(harmful)),
    )
    matrix.sort_indices()
    return AbsorbingView(harmful, local, matrix)


def absorbing_view(graph: RecGraph) -> AbsorbingView:
    """
    Restrict the walk to harmful nodes; neutral nodes absorb

    Raises:
        UnreachableHarmfulComponentError: Some harmful node never reaches neutral content
    """
    unreachable = unreachable_harmful(graph)
    if unreachable:
        raise UnreachableHarmfulComponentError(unreachable)
    view = _transition_block(graph)
    logger.debug("Absorbing view: %d harmful nodes, %d harmful transitions",
                 view.size, view.matrix.nnz)
    return view


def _auto_cap(first: float, second: float, span: int, iteration: int,
              x: np.ndarray, tol: float) -> Optional[int]:
    # contraction rate from the step sizes at both ends of the probe window;
    # None means no decay yet
    rate = (second / first) ** (1.0 / span) if first > 0 else 0.0
    if rate >= 1.0:
        return None
    if rate <= 0.0:
        return iteration + 1
    z_upper = float(np.max(np.abs(x))) + second * rate / (1.0 - rate)
    remaining = math.ceil(math.log(tol / second) / math.log(rate))
    return max(10 * math.ceil(z_upper), iteration + 2 * max(remaining, 1))


def _solve_fixed_point(matrix: sparse.csr_matrix, rhs: np.ndarray, tol: float,
                       max_iter: Optional[int]) -> np.ndarray:
    """
    Iterate x <- rhs + M x from x = rhs until the max-norm step drops below tol

    With max_iter None the cap is sized from the decay observed over the
    first hundred iterations. While walks are still travelling along harmful
    paths the step stays flat, so the probe window doubles until it starts
    past the block size, where a substochastic block must show decay.
    """
    x = np.array(rhs, dtype=np.float64, copy=True)
    if x.size == 0:
        return x

    size = matrix.shape[0]
    cap = max_iter if max_iter is not None else AUTO_PROBE_ITERATIONS
    probe_start = AUTO_PROBE_ITERATIONS // 2
    midpoint = 0.0
    iteration = 0
    while True:
        iteration += 1
        x_next = rhs + matrix @ x
        step = float(np.max(np.abs(x_next - x)))
        x = x_next
        if step < tol:
            logger.debug("Fixed point reached after %d iterations", iteration)
            return x
        if max_iter is None and iteration == probe_start:
            midpoint = step
        if max_iter is None and iteration == cap and probe_start < cap:
            estimate = _auto_cap(midpoint, step, iteration - probe_start, iteration, x, tol)
            if estimate is not None:
                cap = estimate
                probe_start = cap
                logger.debug("Slow convergence, iteration cap raised to %d", cap)
            elif probe_start >= size:
                raise NotConvergedError(iteration, step)
            else:
                probe_start, cap = iteration, 2 * iteration
                midpoint = step
                logger.debug("No decay after %d iterations, probing until %d", iteration, cap)
        if iteration >= cap:
            raise NotConvergedError(cap, step)


def segregation_vector(view: AbsorbingView, tol: float = 1e-8,
                       max_iter: Optional[int] = None) -> np.ndarray:
    """Solve z = 1 + M_hh z; entries follow view.harmful order"""
    return _solve_fixed_point(view.matrix, np.ones(view.size), tol, max_iter)


def fundamental_column(view: AbsorbingView, u: int, tol: float = 1e-8,
                       max_iter: Optional[int] = None) -> np.ndarray:
    """Column f_{.u} of F = (I - M_hh)^-1, the solution of x = e_u + M_hh x"""
    rhs = np.zeros(view.size)
    rhs[view.index_of(u)] = 1.0
    return _solve_fixed_point(view.matrix, rhs, tol, max_iter)


def fundamental_columns(view: AbsorbingView, nodes: List[int], tol: float = 1e-8,
                        max_iter: Optional[int] = None) -> np.ndarray:
    """Several columns at once as one block solve; column i belongs to nodes[i]"""
    rhs = np.zeros((view.size, len(nodes)))
    for i, u in enumerate(nodes):
        rhs[view.index_of(u), i] = 1.0
    return _solve_fixed_point(view.matrix, rhs, tol, max_iter)


def fundamental_row(view: AbsorbingView, h: int, tol: float = 1e-8,
                    max_iter: Optional[int] = None) -> np.ndarray:
    """Row f_{h.} of F, the solution of y = e_h + M_hh^T y"""
    rhs = np.zeros(view.size)
    rhs[view.index_of(h)] = 1.0
    return _solve_fixed_point(view.transpose, rhs, tol, max_iter)


def graph_segregation(z: np.ndarray,
                      node_ids: Optional[np.ndarray] = None) -> Tuple[float, Optional[int]]:
    """Maximum segregation score and its node; ties go to the lowest id"""
    if len(z) == 0:
        return 0.0, None
    idx = int(np.argmax(z))
    node = idx if node_ids is None else int(node_ids[idx])
    return float(z[idx]), node


class SegregationState:
    """
    Segregation vector plus a lazily filled cache of F columns

    Columns are keyed by global node id and indexed like view.harmful. Rows are
    cached until the next rewiring.
    """

    def __init__(self, view: AbsorbingView, z: np.ndarray, tol: float = 1e-8,
                 max_iter: Optional[int] = None, cache_limit: Optional[int] = None,
                 threads: int = 1):
        self.view = view
        self.z = z
        self.tol = tol
        self.max_iter = max_iter
        self.cache_limit = cache_limit
        self.threads = max(1, threads)
        self.columns: "OrderedDict[int, np.ndarray]" = OrderedDict()
        self.rows: Dict[int, np.ndarray] = {}
        self.version = 0
        self._lock = threading.Lock()

    @classmethod
    def from_graph(cls, graph: RecGraph, tol: float = 1e-8, max_iter: Optional[int] = None,
                   cache_limit: Optional[int] = None, threads: int = 1) -> "SegregationState":
        view = absorbing_view(graph)
        z = segregation_vector(view, tol, max_iter)
        state = cls(view, z, tol, max_iter, cache_limit, threads)
        logger.info("Initial segregation Z=%.6f over %d harmful nodes", state.Z, view.size)
        return state

    @property
    def Z(self) -> float:
        return graph_segregation(self.z, self.view.harmful)[0]

    @property
    def argmax(self) -> Optional[int]:
        return graph_segregation(self.z, self.view.harmful)[1]

    def z_of(self, node: int) -> float:
        return float(self.z[self.view.index_of(node)])

    def _store(self, u: int, column: np.ndarray) -> None:
        with self._lock:
            self.columns[u] = column
            self.columns.move_to_end(u)
            if self.cache_limit is not None:
                while len(self.columns) > self.cache_limit:
                    evicted, _ = self.columns.popitem(last=False)
                    logger.debug("Evicted column %d", evicted)

    def column(self, u: int) -> np.ndarray:
        """Cached column f_{.u}; solved on first demand"""
        with self._lock:
            cached = self.columns.get(u)
            if cached is not None:
                self.columns.move_to_end(u)
                return cached
        try:
            column = fundamental_column(self.view, u, self.tol, self.max_iter)
        except NotConvergedError as e:
            raise ColumnUnavailableError(u, e) from e
        self._store(u, column)
        return column

    def prefetch(self, sources: Iterable[int], threads: Optional[int] = None) -> int:
        """Solve every missing column in blocks, fanning blocks out over threads"""
        missing = sorted({int(u) for u in sources if int(u) not in self.columns})
        if not missing:
            return 0
        if self.cache_limit is not None:
            missing = missing[: self.cache_limit]

        batch = get_config().COLUMN_BATCH
        chunks = [missing[i:i + batch] for i in range(0, len(missing), batch)]

        def solve(chunk: List[int]) -> Tuple[List[int], np.ndarray]:
            try:
                return chunk, fundamental_columns(self.view, chunk, self.tol, self.max_iter)
            except NotConvergedError as e:
                raise ColumnUnavailableError(chunk[0], e) from e

        workers = max(1, threads or self.threads)
        if workers == 1 or len(chunks) == 1:
            results = [solve(chunk) for chunk in chunks]
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(solve, chunks))

        for chunk, block in results:
            for i, u in enumerate(chunk):
                self._store(u, np.ascontiguousarray(block[:, i]))
        logger.debug("Prefetched %d columns in %d blocks", len(missing), len(chunks))
        return len(missing)

    def row(self, h: int) -> np.ndarray:
        """Row f_{h.}; valid until the next rewiring"""
        with self._lock:
            cached = self.rows.get(h)
        if cached is not None:
            return cached
        try:
            row = fundamental_row(self.view, h, self.tol, self.max_iter)
        except NotConvergedError as e:
            raise ColumnUnavailableError(h, e) from e
        with self._lock:
            self.rows[h] = row
        return row


def delta_segregation(h: int, op: "RewiringOp", state: SegregationState) -> float:
    """Decrease of z_h caused by op: f_hu z_v / (1/p_o + f_vu)"""
    column = state.column(op.u)
    lv = state.view.index_of(op.v)
    lh = state.view.index_of(h)
    return float(column[lh] * state.z[lv] / (1.0 / op.p_o + column[lv]))


def update_after_rewiring(state: SegregationState, op: "RewiringOp") -> None:
    """
    Rank-one update of z and every cached column after op was applied

    Removing u -> v with probability p turns I - M_hh into I - M_hh + p e_u e_v^T;
    the inserted target is neutral and adds nothing to M_hh.
    """
    col_u = state.column(op.u).copy()
    lv = state.view.index_of(op.v)
    p = op.p_o
    denom = 1.0 + p * col_u[lv]

    state.z = state.z - col_u * (p * state.z[lv] / denom)
    with state._lock:
        for column in state.columns.values():
            column -= col_u * (p * column[lv] / denom)
        state.rows.clear()
    state.view.remove_transition(op.u, op.v)
    state.version += 1


def _dense_system(graph: RecGraph, guard: int) -> Tuple[AbsorbingView, np.ndarray]:
    view = _transition_block(graph)
    if view.size > guard:
        raise TooLargeForDenseOracleError(view.size, guard)
    return view, np.eye(view.size) - view.matrix.toarray()


def dense_oracle_z(graph: RecGraph, guard: int = 2000) -> np.ndarray:
    """Exact z by a dense solve of (I - M_hh) z = 1"""
    view, system = _dense_system(graph, guard)
    if view.size == 0:
        return np.zeros(0)
    try:
        z = np.linalg.solve(system, np.ones(view.size))
    except np.linalg.LinAlgError as e:
        raise SingularSystemError(f"(I - M_hh) is singular: {e}") from e
    if not np.all(np.isfinite(z)) or (z < 1.0 - 1e-9).any():
        raise SingularSystemError("(I - M_hh) is numerically singular")
    return z


def dense_oracle_fundamental(graph: RecGraph, guard: int = 2000) -> np.ndarray:
    """Full F by dense inversion, indexed like graph.harmful_ids"""
    view, system = _dense_system(graph, guard)
    if view.size == 0:
        return np.zeros((0, 0))
    try:
        fundamental = np.linalg.inv(system)
    except np.linalg.LinAlgError as e:
        raise SingularSystemError(f"(I - M_hh) is singular: {e}") from e
    if not np.all(np.isfinite(fundamental)):
        raise SingularSystemError("(I - M_hh) is numerically singular")
    return fundamental


@dataclass
class HittingEstimate:
    mean: float
    trials: int
    std_error: float
    capped: int = 0
    step_cap: int = 0


def monte_carlo_hitting(graph: RecGraph, u: int, trials: int, seed: int,
                        step_cap: Optional[int] = None,
                        segregation: Optional[float] = None) -> HittingEstimate:
    """
    Simulate walks from u until a neutral node is hit

    Args:
        graph: Recommendation graph
        u: Harmful start node
        trials: Number of walks
        seed: Generator seed
        step_cap: Walk length cap; defaults to 100*segregation or the configured fallback
        segregation: Analytic graph segregation Z, when known

    Returns:
        HittingEstimate: Mean walk length, its standard error and the capped walk count
    """
    if not graph.is_harmful(u):
        raise ValueError(f"Node {u} is not harmful")
    if step_cap is None:
        if segregation is not None and segregation > 0:
            step_cap = int(math.ceil(100 * segregation))
        else:
            step_cap = get_config().MONTE_CARLO_FALLBACK_CAP

    rng = np.random.default_rng(seed)
    cdf = np.cumsum(np.asarray(graph.discount.table, dtype=np.float64))
    harmful = graph.harmful_mask
    last_rank = graph.d - 1

    position = np.full(trials, u, dtype=np.int64)
    steps = np.zeros(trials, dtype=np.int64)
    active = np.ones(trials, dtype=bool)

    for _ in range(step_cap):
        walkers = np.flatnonzero(active)
        if not len(walkers):
            break
        ranks = np.minimum(np.searchsorted(cdf, rng.random(len(walkers)) * cdf[-1], side="right"),
                           last_rank)
        position[walkers] = graph.lists[position[walkers], ranks]
        steps[walkers] += 1
        active[walkers] = harmful[position[walkers]]

    capped = int(active.sum())
    if capped:
        logger.warning("%d of %d walks from node %d hit the step cap %d", capped, trials, u, step_cap)

    mean = float(steps.mean())
    std_error = float(steps.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    return HittingEstimate(mean=mean, trials=trials, std_error=std_error,
                           capped=capped, step_cap=step_cap)
