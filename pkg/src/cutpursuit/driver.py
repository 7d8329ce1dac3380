"""Cut-pursuit main loop for scalar problems."""

from __future__ import annotations

import csv
import io
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .direction import TernaryDirection, ternary_from_deltas, two_cuts_from_deltas
from .functional import (
    InfeasibleError,
    ProblemSpec,
    equal_edges,
    objective,
    snap_nonsmooth,
    vertex_deltas,
)
from .graph import Partition, build_reduced_graph, merge_close_components, refine_partition
from .reduced import ConvergenceWarning, ReducedProblem, edge_duals, lift, reduced_duals, solve_reduced

__all__ = ["SolveOptions", "TraceRecord", "SolveTrace", "Solution", "cut_pursuit", "TRACE_HEADER"]

TRACE_HEADER = ("iter", "elapsed_s", "objective", "n_components", "dir_deriv", "stop_reason")


@dataclass
class SolveOptions:
    """Tolerances and limits of the outer loop.

    ``eps_eq``, ``eps_snap`` and ``merge_eps`` default (``None``) to ten
    times ``tol_x`` times the magnitude of the current values. The reduced
    solver stops on a small relative step, which on ill-conditioned reduced
    problems understates its error by orders of magnitude; thresholds tied
    to the reduced tolerance then miss equalities the exact reduced
    solution would have.
    ``direction`` selects ``"two_cuts"`` (default) or ``"two_stage"``.
    """

    tol_dir: float = 1e-8
    tol_x: float = 1e-6
    eps_eq: float | None = None
    eps_snap: float | None = None
    merge_eps: float | None = None
    max_iter: int = 50
    reduced_tol_factor: float = 1e-3
    reduced_max_iter: int = 10_000
    initial_partition: Partition | None = None
    direction: str = "two_cuts"

    def __post_init__(self):
        for name in ("tol_dir", "tol_x", "reduced_tol_factor"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        for name in ("eps_eq", "eps_snap", "merge_eps"):
            val = getattr(self, name)
            if val is not None and val < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.direction not in ("two_cuts", "two_stage"):
            raise ValueError(f"unknown direction solver {self.direction!r}")

    @property
    def reduced_tol(self) -> float:
        return self.tol_x * self.reduced_tol_factor


@dataclass
class TraceRecord:
    iteration: int
    elapsed: float
    objective: float
    n_components: int
    dir_deriv: float
    reduced_iterations: int = 0
    reduced_converged: bool = True
    evolution: float = float("nan")
    n_split: int = 0


@dataclass
class SolveTrace:
    records: list[TraceRecord] = field(default_factory=list)
    stop_reason: str = ""

    def __len__(self):
        return len(self.records)

    @property
    def objectives(self) -> np.ndarray:
        return np.array([r.objective for r in self.records])

    @property
    def component_counts(self) -> np.ndarray:
        return np.array([r.n_components for r in self.records])

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(TRACE_HEADER)
        last = len(self.records) - 1
        for i, r in enumerate(self.records):
            writer.writerow(
                [r.iteration, repr(r.elapsed), repr(r.objective), r.n_components,
                 repr(r.dir_deriv), self.stop_reason if i == last else ""]
            )
        return buf.getvalue()


@dataclass
class Solution:
    x: np.ndarray
    partition: Partition
    xi: np.ndarray
    trace: SolveTrace

    @property
    def objective(self) -> float:
        return self.trace.records[-1].objective

    @property
    def iterations(self) -> int:
        return len(self.trace.records)


def _auto_eps(explicit: float | None, tol: float, values: np.ndarray) -> float:
    if explicit is not None:
        return explicit
    spread = float(np.ptp(values)) if values.size else 0.0
    return 10.0 * tol * max(spread, float(np.max(np.abs(values))) if values.size else 0.0, 1e-300)


def initial_values(spec: ProblemSpec, partition: Partition) -> np.ndarray:
    """Feasible starting values: zero projected on each aggregated domain."""
    terms = spec.nonsmooth.aggregate(partition)
    return terms.project(np.zeros(len(partition)))


def cut_pursuit(spec: ProblemSpec, options: SolveOptions | None = None) -> Solution:
    """Minimize ``f + sum g_v + TV`` by alternating reduced solves and cut refinements.

    Each iteration solves the reduced problem (warm-started), snaps values
    onto the kinks of the aggregated terms, merges adjacent components with
    close values, computes the steepest ternary direction at the lifted
    point and stops if its derivative is above ``-tol_dir`` or if the
    relative iterate evolution is below ``tol_x``; otherwise components are
    split along the constant connected components of the direction.

    Raises
    ------
    InfeasibleError
        If the vertex domains of some initial component do not intersect;
        pass a finer ``initial_partition`` in that case.
    """
    opts = options if options is not None else SolveOptions()
    graph = spec.graph
    n = graph.vertex_count
    if n == 0:
        raise ValueError("empty graph")
    partition = opts.initial_partition if opts.initial_partition is not None else Partition.whole(n)
    try:
        xi = initial_values(spec, partition)
    except InfeasibleError as exc:
        raise InfeasibleError(
            f"{exc}; the intersection of the vertex domains is empty, provide an initial_partition"
        ) from exc
    solve_dir = two_cuts_from_deltas if opts.direction == "two_cuts" else ternary_from_deltas
    trace = SolveTrace()
    start = time.perf_counter()
    x_prev = None
    rtol = opts.reduced_tol
    y_edges = None  # dual of every original edge, carried across iterations

    for it in range(1, opts.max_iter + 1):
        reduced = build_reduced_graph(graph, partition)
        problem = ReducedProblem(spec, partition, reduced)
        y0 = reduced_duals(graph, reduced, y_edges) if y_edges is not None else None
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            sol = solve_reduced(
                spec, partition, xi, rtol, opts.reduced_max_iter, problem=problem, dual_init=y0
            )
        xi = sol.xi
        y_edges = edge_duals(graph, reduced, sol.dual, y_edges)
        eps_snap = _auto_eps(opts.eps_snap, opts.tol_x, xi)
        xi = problem.terms.snap(xi, eps_snap)
        merge_eps = _auto_eps(opts.merge_eps, opts.tol_x, xi)
        if merge_eps > 0:
            partition, xi = merge_close_components(graph, partition, xi, merge_eps, reduced)
            xi = spec.nonsmooth.aggregate(partition).snap(xi, eps_snap)
        x = lift(partition, xi)
        x_eval = snap_nonsmooth(spec, x, eps_snap)
        eps_eq = _auto_eps(opts.eps_eq, opts.tol_x, x)
        deltas = vertex_deltas(spec, x_eval, eps_eq)
        equal = equal_edges(graph, x_eval, eps_eq)
        direction: TernaryDirection = solve_dir(deltas, graph, equal)

        evolution = np.inf
        if x_prev is not None:
            evolution = float(np.linalg.norm(x - x_prev) / max(np.linalg.norm(x), 1e-300))
        record = TraceRecord(
            iteration=it,
            elapsed=time.perf_counter() - start,
            objective=objective(spec, x),
            n_components=len(partition),
            dir_deriv=direction.value,
            reduced_iterations=sol.iterations,
            reduced_converged=sol.converged,
            evolution=evolution,
        )
        trace.records.append(record)

        if -direction.value <= opts.tol_dir:
            trace.stop_reason = "stationary"
            break
        if evolution <= opts.tol_x:
            trace.stop_reason = "iterate_evolution"
            break
        refined = refine_partition(graph, partition, direction.d)
        record.n_split = len(refined) - len(partition)
        if record.n_split == 0:
            # direction constant on every component: x is stationary up to the
            # accuracy of the reduced solve
            trace.stop_reason = "no_refinement"
            break
        if it == opts.max_iter:
            trace.stop_reason = "max_iter"
            break
        # new boundaries: the dual follows the side the direction raises
        inside = partition.labels[graph.u] == partition.labels[graph.v]
        y_edges[inside] = np.sign(direction.d[graph.u[inside]] - direction.d[graph.v[inside]])
        # children inherit the value of their parent component
        first_vertex = np.array([c[0] for c in refined.components], dtype=np.int64)
        xi = xi[partition.labels[first_vertex]]
        partition = refined
        x_prev = x

    return Solution(x=x, partition=partition, xi=xi, trace=trace)
