"""Reduced problems over a partition and their first-order solver.

For a partition of the vertices, the reduced problem optimizes one value
per component; the smooth term is evaluated on the lifted vector and its
gradient pulled back by summing over components, the nonsmooth terms of a
component aggregate into one term, and the total variation lives on the
reduced graph.

The solver is a diagonally preconditioned primal-dual splitting
(forward step on the smooth term, proximity step on the aggregated terms,
one dual variable per reduced edge and coordinate for the total variation):

    xi+ = prox_{T gamma}(xi - T (grad h(xi) + K^T y))
    y+  = proj_[-1, 1](y + S K (2 xi+ - xi))

with ``K = diag(omega) D`` (``D`` the reduced incidence matrix),
``S = diag(1 / (2 omega))`` and ``T = diag(1 / (deg_omega + curvature))``.
The same routine run over the singleton partition is the full-graph
baseline.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .graph import Partition, ReducedGraph, build_reduced_graph

__all__ = [
    "ConvergenceWarning",
    "ReducedProblem",
    "ReducedSolution",
    "BaselineResult",
    "lift",
    "reduced_objective",
    "primal_dual",
    "solve_reduced",
    "edge_duals",
    "reduced_duals",
    "baseline_solve",
]


CURVATURE_FACTOR = 0.55


class ConvergenceWarning(UserWarning):
    """An iterative solver stopped at its iteration cap before reaching tolerance."""


def lift(partition: Partition, xi: np.ndarray) -> np.ndarray:
    """Piecewise-constant vector taking value ``xi[U]`` on component ``U``."""
    return np.asarray(xi, dtype=float)[partition.labels]


class ReducedProblem:
    """Oracles of ``xi -> F(lift(xi))`` for a fixed partition.

    Works for scalar problems (``xi`` of shape ``(C,)``) and vector-valued
    ones (``(C, K)``); ``spec`` needs ``graph``, ``smooth`` and ``nonsmooth``.
    """

    def __init__(self, spec, partition: Partition, reduced: ReducedGraph | None = None):
        self.spec = spec
        self.partition = partition
        self.graph = reduced if reduced is not None else build_reduced_graph(spec.graph, partition)
        self.terms = spec.nonsmooth.aggregate(partition)
        self._curvature = None
        self._pullback = None

    @property
    def size(self) -> int:
        return len(self.partition)

    def lift(self, xi: np.ndarray) -> np.ndarray:
        return xi[self.partition.labels]

    def pull_back(self, g: np.ndarray) -> np.ndarray:
        """Chain rule through the lift: sum of vertex gradients per component."""
        if g.ndim == 1:
            return np.bincount(self.partition.labels, weights=g, minlength=self.size)
        if self._pullback is None:
            n = len(self.partition.labels)
            self._pullback = sp.csr_matrix(
                (np.ones(n), (self.partition.labels, np.arange(n))), shape=(self.size, n)
            )
        return self._pullback @ g

    def gradient(self, xi: np.ndarray) -> np.ndarray:
        return self.pull_back(self.spec.smooth.gradient(self.lift(xi)))

    @property
    def curvature(self) -> np.ndarray:
        if self._curvature is None:
            self._curvature = np.asarray(self.spec.smooth.curvature(self.partition), dtype=float)
        return self._curvature

    def tv(self, xi: np.ndarray) -> float:
        diff = np.abs(xi[self.graph.edge_u] - xi[self.graph.edge_v])
        if diff.ndim > 1:
            diff = diff.sum(axis=1)
        return float(self.graph.weights @ diff)

    def objective(self, xi: np.ndarray) -> float:
        xi = np.asarray(xi, dtype=float)
        g = self.terms.value(xi)
        if g == np.inf:
            return np.inf
        return self.spec.smooth.value(self.lift(xi)) + g + self.tv(xi)


def reduced_objective(spec, partition: Partition, xi: np.ndarray) -> float:
    return ReducedProblem(spec, partition).objective(np.asarray(xi, dtype=float))


def primal_dual(
    grad: Callable[[np.ndarray], np.ndarray],
    prox: Callable[[np.ndarray, np.ndarray], np.ndarray],
    edge_u: np.ndarray,
    edge_v: np.ndarray,
    weights: np.ndarray,
    curvature: np.ndarray,
    xi0: np.ndarray,
    tol: float,
    max_iter: int,
    y0: np.ndarray | None = None,
    callback: Callable[[int, np.ndarray], None] | None = None,
) -> tuple[np.ndarray, np.ndarray, int, bool]:
    """Run the preconditioned splitting until ``||dxi|| <= tol ||xi||``.

    Returns ``(xi, y, iterations, converged)``. ``curvature`` has the shape
    of ``xi`` or one entry per row; rows of a vector-valued ``xi`` share a
    single step so that the proximity operator stays Euclidean per row.
    """
    xi = np.array(xi0, dtype=float)
    n = xi.shape[0]
    vector = xi.ndim > 1
    deg = np.bincount(edge_u, weights=weights, minlength=n) + np.bincount(edge_v, weights=weights, minlength=n)
    curv = np.asarray(curvature, dtype=float)
    if curv.ndim > 1:
        curv = curv.max(axis=1)
    # convergence needs T^-1 - K^T S K > H / 2; K^T S K <= diag(deg) and H <= diag(curv)
    tau = 1.0 / np.maximum(deg + CURVATURE_FACTOR * curv, 1e-12)
    if vector:
        tau = tau[:, None]
    wcol = weights[:, None] if vector else weights
    y = np.zeros((len(weights),) + xi.shape[1:]) if y0 is None else np.array(y0, dtype=float)
    has_edges = len(weights) > 0

    def adjoint(y):
        wy = wcol * y
        if not vector:
            return np.bincount(edge_u, weights=wy, minlength=n) - np.bincount(edge_v, weights=wy, minlength=n)
        out = np.zeros_like(xi)
        np.add.at(out, edge_u, wy)
        np.subtract.at(out, edge_v, wy)
        return out

    kty = adjoint(y) if has_edges else 0.0
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        new = prox(xi - tau * (grad(xi) + kty), tau)
        if has_edges:
            bar = 2.0 * new - xi
            y += 0.5 * (bar[edge_u] - bar[edge_v])
            np.minimum(y, 1.0, out=y)
            np.maximum(y, -1.0, out=y)
            kty = adjoint(y)
        diff = (new - xi).ravel()
        flat = new.ravel()
        step = math.sqrt(diff @ diff)
        scale = math.sqrt(flat @ flat)
        xi = new
        if callback is not None:
            callback(it, xi)
        if step <= tol * scale or step == 0.0:
            converged = True
            break
    return xi, y, it, converged


@dataclass
class ReducedSolution:
    xi: np.ndarray
    iterations: int
    converged: bool
    problem: ReducedProblem = field(repr=False)
    dual: np.ndarray | None = field(default=None, repr=False)


def _crossing(graph, reduced: ReducedGraph):
    """Crossing edges, their reduced edge ids and orientation (+1 if ``u`` is in the lower component)."""
    labels = reduced.partition.labels
    cu, cv = labels[graph.u], labels[graph.v]
    cross = np.flatnonzero(cu != cv)
    a = np.minimum(cu[cross], cv[cross])
    b = np.maximum(cu[cross], cv[cross])
    n = max(len(reduced.partition), 1)
    rid = np.searchsorted(reduced.edge_u * n + reduced.edge_v, a * n + b)
    sign = np.where(cu[cross] == a, 1.0, -1.0)
    return cross, rid, sign


def edge_duals(graph, reduced: ReducedGraph, y: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
    """Spread reduced-edge duals onto the original edges, oriented ``u -> v``.

    Edges inside components keep their value from ``out`` (zero if absent).
    """
    out = np.zeros((graph.edge_count,) + y.shape[1:]) if out is None else out
    cross, rid, sign = _crossing(graph, reduced)
    out[cross] = y[rid] * (sign[:, None] if y.ndim > 1 else sign)
    return out


def reduced_duals(graph, reduced: ReducedGraph, y_edges: np.ndarray) -> np.ndarray:
    """Weighted mean of original-edge duals over each reduced edge."""
    cross, rid, sign = _crossing(graph, reduced)
    w = graph.w[cross] * sign
    if y_edges.ndim > 1:
        w = w[:, None]
    acc = np.zeros((len(reduced.weights),) + y_edges.shape[1:])
    np.add.at(acc, rid, w * y_edges[cross])
    wr = reduced.weights[:, None] if y_edges.ndim > 1 else reduced.weights
    return np.clip(acc / wr, -1.0, 1.0)


def _dual_start(xi: np.ndarray, reduced: ReducedGraph) -> np.ndarray:
    # optimal dual on edges whose values differ is the sign of the difference
    return np.sign(xi[reduced.edge_u] - xi[reduced.edge_v])


def solve_reduced(
    spec,
    partition: Partition,
    xi_init: np.ndarray | None = None,
    tol: float = 1e-9,
    max_iter: int = 10_000,
    problem: ReducedProblem | None = None,
    callback: Callable[[int, np.ndarray], None] | None = None,
    dual_init: np.ndarray | None = None,
) -> ReducedSolution:
    """Approximate minimizer of the reduced problem, warm-started at ``xi_init``.

    The starting point is projected onto the aggregated domains first; the
    dual starts at ``dual_init`` (one entry per reduced edge) or at the sign
    of the reduced differences. When
    ``max_iter`` is exhausted the current iterate is returned with
    ``converged=False`` and a :class:`ConvergenceWarning` is issued.
    """
    problem = problem if problem is not None else ReducedProblem(spec, partition)
    if xi_init is None:
        shape = (problem.size,) + getattr(spec, "value_shape", ())
        xi_init = np.zeros(shape)
    xi0 = problem.terms.project(np.asarray(xi_init, dtype=float))
    rg = problem.graph
    y0 = _dual_start(xi0, rg) if dual_init is None else np.array(dual_init, dtype=float)
    xi, y, iters, ok = primal_dual(
        problem.gradient,
        problem.terms.prox,
        rg.edge_u,
        rg.edge_v,
        rg.weights,
        problem.curvature,
        xi0,
        tol,
        max_iter,
        y0=y0,
        callback=callback,
    )
    if not ok:
        warnings.warn(
            f"reduced solver hit max_iter={max_iter} before tol={tol:g}", ConvergenceWarning, stacklevel=2
        )
    return ReducedSolution(xi, iters, ok, problem, y)


@dataclass
class BaselineResult:
    x: np.ndarray
    iterations: int
    converged: bool
    elapsed: float
    trace: list[tuple[int, float, float]]  # (iteration, elapsed seconds, objective)


def baseline_solve(
    spec,
    tol: float = 1e-8,
    max_iter: int = 100_000,
    x_init: np.ndarray | None = None,
    checkpoint: int = 100,
    on_checkpoint: Callable[[int, float, float], bool | None] | None = None,
) -> BaselineResult:
    """Full-graph reference solve: the reduced solver over singletons.

    Every ``checkpoint`` iterations the objective is recorded;
    ``on_checkpoint(iteration, elapsed, objective)`` may return ``True`` to
    request an early stop.
    """
    n = spec.graph.vertex_count
    partition = Partition.singletons(n)
    problem = ReducedProblem(spec, partition)
    trace: list[tuple[int, float, float]] = []
    start = time.perf_counter()

    class _Stop(Exception):
        pass

    state = {"xi": None, "it": 0}

    def cb(it, xi):
        state["xi"], state["it"] = xi, it
        if checkpoint and it % checkpoint == 0:
            now = time.perf_counter() - start
            obj = problem.objective(xi)
            trace.append((it, now, obj))
            if on_checkpoint is not None and on_checkpoint(it, now, obj):
                raise _Stop

    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            sol = solve_reduced(spec, partition, x_init, tol, max_iter, problem=problem, callback=cb)
        x, iters, ok = sol.xi, sol.iterations, sol.converged
    except _Stop:
        x, iters, ok = state["xi"], state["it"], False
    elapsed = time.perf_counter() - start
    if not trace or trace[-1][0] != iters:
        trace.append((iters, elapsed, problem.objective(x)))
    if not ok and on_checkpoint is None:
        warnings.warn(f"baseline hit max_iter={max_iter} before tol={tol:g}", ConvergenceWarning, stacklevel=2)
    return BaselineResult(problem.lift(x), iters, ok, elapsed, trace)
