"""Cut-pursuit heuristic for vector-valued vertices (values in R^K).

The built-in instance is simplex-constrained label smoothing:

    p -> sum_v KL(beta u + (1 - beta) q_v, beta u + (1 - beta) p_v)
         + sum_v indicator_simplex(p_v) + sum_e w_e ||p_u - p_v||_1

Descent directions are searched among a few candidates per vertex (move
probability mass from the most likely label to another one) with binary
graph cuts chained as expansion moves.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .driver import SolveOptions, SolveTrace, TraceRecord, _auto_eps
from .graph import Partition, WeightedGraph, build_reduced_graph, merge_close_components, refine_partition
from .maxflow import FlowNetwork, max_flow_min_cut
from .reduced import ConvergenceWarning, ReducedProblem, lift, solve_reduced

__all__ = [
    "project_simplex",
    "KLFidelity",
    "SimplexIndicator",
    "MultiProblemSpec",
    "DirectionEnergy",
    "CandidateDirections",
    "candidate_directions",
    "min_pairwise_binary",
    "binary_move_cut",
    "ExpansionResult",
    "alpha_expansion_direction",
    "MultiSolution",
    "multi_objective",
    "cut_pursuit_multidim",
]

SIMPLEX_TOL = 1e-9


def project_simplex(x: np.ndarray) -> np.ndarray:
    """Euclidean projection of each row onto the probability simplex."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    k = x.shape[1]
    srt = -np.sort(-x, axis=1)
    css = np.cumsum(srt, axis=1) - 1.0
    ind = np.arange(1, k + 1)
    cond = srt - css / ind > 0
    rho = k - 1 - np.argmax(cond[:, ::-1], axis=1)
    theta = css[np.arange(len(x)), rho] / (rho + 1)
    return np.maximum(x - theta[:, None], 0.0)


class KLFidelity:
    """Smoothed Kullback-Leibler fidelity to reference distributions ``q``."""

    def __init__(self, q: np.ndarray, beta: float):
        q = np.asarray(q, dtype=float)
        if not 0.0 < beta < 1.0:
            raise ValueError(f"beta must lie in ]0, 1[, got {beta}")
        if q.ndim != 2 or np.any(q < -SIMPLEX_TOL) or np.any(np.abs(q.sum(axis=1) - 1) > 1e-6):
            raise ValueError("q must be a |V| x K array of distributions")
        self.q = q
        self.beta = float(beta)
        self.k = q.shape[1]
        self.r = beta / self.k + (1.0 - beta) * q

    def _s(self, p):
        return self.beta / self.k + (1.0 - self.beta) * p

    def value(self, p):
        return float(np.sum(self.r * np.log(self.r / self._s(np.asarray(p, dtype=float)))))

    def gradient(self, p):
        return -(1.0 - self.beta) * self.r / self._s(np.asarray(p, dtype=float))

    def curvature(self, partition: Partition) -> np.ndarray:
        # Hessian is diagonal; over the simplex s >= beta / K
        bound = (1.0 - self.beta) ** 2 * (self.k / self.beta) ** 2
        return bound * partition.group_sum(self.r)


class SimplexIndicator:
    """Separable indicator of the simplex, one row per vertex or component."""

    def __init__(self, size: int):
        self.size = int(size)

    def value(self, x):
        return 0.0 if self.in_domain(x) else np.inf

    def in_domain(self, x):
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= -SIMPLEX_TOL) and np.all(np.abs(x.sum(axis=1) - 1.0) <= SIMPLEX_TOL))

    def prox(self, t, step=None):
        return project_simplex(t)

    project = prox

    def snap(self, x, eps):
        """Zero the coordinates within ``eps`` of 0, restoring unit sums on the largest one."""
        x = np.array(x, dtype=float)
        if eps > 0:
            x[np.abs(x) <= eps] = 0.0
            top = np.argmax(x, axis=1)
            x[np.arange(len(x)), top] += 1.0 - x.sum(axis=1)
        return x

    def aggregate(self, partition: Partition) -> "SimplexIndicator":
        return SimplexIndicator(len(partition))

    def dir_deriv(self, p: np.ndarray, d: np.ndarray, eps: float = 0.0) -> np.ndarray:
        """Row-wise one-sided derivative: 0 for feasible directions, ``inf`` otherwise."""
        bad = np.abs(d.sum(axis=1)) > 1e-12
        bad |= np.any((p <= eps) & (d < 0), axis=1)
        bad |= np.any((p >= 1.0 - eps) & (d > 0), axis=1)
        return np.where(bad, np.inf, 0.0)


@dataclass(frozen=True)
class MultiProblemSpec:
    graph: WeightedGraph
    smooth: KLFidelity
    nonsmooth: SimplexIndicator = None

    def __post_init__(self):
        if self.nonsmooth is None:
            object.__setattr__(self, "nonsmooth", SimplexIndicator(self.graph.vertex_count))
        if self.smooth.q.shape[0] != self.graph.vertex_count:
            raise ValueError("q must have one row per vertex")

    @property
    def k(self) -> int:
        return self.smooth.k

    @property
    def value_shape(self) -> tuple[int]:
        return (self.smooth.k,)

    @property
    def vertex_count(self) -> int:
        return self.graph.vertex_count


def multi_objective(spec: MultiProblemSpec, p: np.ndarray) -> float:
    p = np.asarray(p, dtype=float)
    g = spec.nonsmooth.value(p)
    if g == np.inf:
        return np.inf
    return spec.smooth.value(p) + g + spec.graph.total_variation(p)


class DirectionEnergy:
    """``d -> F'(p, d)`` split into vertex terms and edge terms.

    Coordinates of an edge whose values differ contribute linearly and are
    folded into the vertex terms; coordinates with equal values (within
    ``eps_eq``) contribute ``w |d_uk - d_vk|``.
    """

    def __init__(self, spec: MultiProblemSpec, p: np.ndarray, eps_eq: float = 0.0):
        g = spec.graph
        self.spec = spec
        self.p = np.asarray(p, dtype=float)
        diff = self.p[g.u] - self.p[g.v]
        self.equal = np.abs(diff) <= eps_eq  # (E, K)
        lin = np.where(self.equal, 0.0, np.sign(diff)) * g.w[:, None]
        n, k = self.p.shape
        slope = spec.smooth.gradient(self.p).copy()
        np.add.at(slope, g.u, lin)
        np.subtract.at(slope, g.v, lin)
        self.slope = slope
        self.eps = eps_eq

    def unary(self, d: np.ndarray) -> np.ndarray:
        return np.sum(self.slope * d, axis=1) + self.spec.nonsmooth.dir_deriv(self.p, d, 0.0)

    def pair(self, du: np.ndarray, dv: np.ndarray, edges=slice(None)) -> np.ndarray:
        g = self.spec.graph
        return g.w[edges] * np.sum(np.where(self.equal[edges], np.abs(du - dv), 0.0), axis=1)

    def energy(self, d: np.ndarray) -> float:
        g = self.spec.graph
        un = self.unary(d)
        if np.any(un == np.inf):
            return np.inf
        return float(un.sum() + self.pair(d[g.u], d[g.v]).sum())


@dataclass(frozen=True)
class CandidateDirections:
    """``D_v = {0} U {e_k - e_{k_v} : k != k_v}`` with ``k_v`` the top label of ``p_v``."""

    top: np.ndarray
    k: int

    def direction(self, v: int, label: int) -> np.ndarray:
        d = np.zeros(self.k)
        d[label] += 1.0
        d[self.top[v]] -= 1.0
        return d

    def sets(self) -> list[np.ndarray]:
        return [np.array([self.direction(v, lab) for lab in range(self.k)]) for v in range(len(self.top))]

    def toward(self, labels: np.ndarray) -> np.ndarray:
        """Direction field ``e_{labels[v]} - e_{k_v}`` (zero where ``labels == top``)."""
        n = len(self.top)
        d = np.zeros((n, self.k))
        d[np.arange(n), labels] += 1.0
        d[np.arange(n), self.top] -= 1.0
        return d


def candidate_directions(p: np.ndarray) -> CandidateDirections:
    p = np.asarray(p, dtype=float)
    return CandidateDirections(np.argmax(p, axis=1), p.shape[1])


def min_pairwise_binary(theta0, theta1, u, v, A, B, C, D) -> np.ndarray:
    """Minimize ``sum theta_v(z_v) + sum E_e(z_u, z_v)`` over ``z in {0,1}^n``.

    Pairwise tables ``(A, B, C, D) = (E(0,0), E(0,1), E(1,0), E(1,1))`` must
    satisfy ``A + D <= B + C``. ``theta1`` may be ``+inf``. Ties favor 0.
    """
    n = len(theta0)
    lin = np.asarray(theta1, float) - np.asarray(theta0, float)
    lam = B + C - A - D
    if np.any(lam < -1e-9 * (1 + np.abs(A) + np.abs(D))):
        raise ValueError("pairwise energy is not submodular")
    lin = lin.copy()
    np.add.at(lin, u, C - A)
    np.add.at(lin, v, D - C)
    s, t = n, n + 1
    net = FlowNetwork(n + 2, s, t)
    idx = np.arange(n)
    net.add_arcs(idx, np.full(n, t), np.maximum(lin, 0.0))
    net.add_arcs(np.full(n, s), idx, np.maximum(-lin, 0.0))
    # cost lam when z_u = 0 (sink side) and z_v = 1 (source side)
    net.add_arcs(v, u, np.maximum(lam, 0.0))
    _, side = max_flow_min_cut(net)
    return side[:n].astype(np.int8)


def _move(energy: DirectionEnergy, current: np.ndarray, proposal: np.ndarray, movable: np.ndarray):
    g = energy.spec.graph
    theta0 = energy.unary(current)
    theta1 = np.where(movable, energy.unary(proposal), np.inf)
    A = energy.pair(current[g.u], current[g.v])
    B = energy.pair(current[g.u], proposal[g.v])
    C = energy.pair(proposal[g.u], current[g.v])
    D = energy.pair(proposal[g.u], proposal[g.v])
    # truncation keeps the move graph-representable; acceptance below keeps it monotone
    D = np.minimum(D, B + C - A)
    z = min_pairwise_binary(theta0, theta1, g.u, g.v, A, B, C, D)
    return np.where(z[:, None] == 1, proposal, current)


def binary_move_cut(
    spec: MultiProblemSpec, p: np.ndarray, dbar: np.ndarray, eps_eq: float = 0.0,
    energy: DirectionEnergy | None = None,
) -> tuple[np.ndarray, float]:
    """Minimize ``F'(p, .)`` over ``prod_v {0, dbar_v}`` with one cut.

    Returns the direction and its derivative (``<= 0`` since ``d = 0`` is
    admissible). Vertices whose candidate has infinite slope stay at 0.
    """
    energy = energy if energy is not None else DirectionEnergy(spec, p, eps_eq)
    g = spec.graph
    dbar = np.asarray(dbar, dtype=float)
    zero = np.zeros_like(dbar)
    B = energy.pair(zero[g.u], dbar[g.v])
    C = energy.pair(dbar[g.u], zero[g.v])
    D = energy.pair(dbar[g.u], dbar[g.v])
    if np.any(D > B + C + 1e-12 * (1 + B + C)):
        raise ArithmeticError("triangle inequality violated by the total-variation norm")
    z = min_pairwise_binary(np.zeros(len(dbar)), energy.unary(dbar), g.u, g.v, np.zeros_like(B), B, C, D)
    d = np.where(z[:, None] == 1, dbar, 0.0)
    return d, energy.energy(d)


@dataclass
class ExpansionResult:
    d: np.ndarray
    value: float
    energies: list[float]  # direction energy before the cycle and after each move
    cuts: int


def alpha_expansion_direction(
    spec: MultiProblemSpec,
    p: np.ndarray,
    candidates: CandidateDirections | None = None,
    eps_eq: float = 0.0,
) -> ExpansionResult:
    """One expansion cycle over the candidate directions, starting from ``d = 0``.

    Move ``j`` (``j = 1 .. K-1``) offers each vertex the candidate
    ``e_k - e_{k_v}`` with ``k = (k_v + j) mod K``; the vertex keeps its
    current direction or takes the offered one. For ``K = 2`` this is a
    single :func:`binary_move_cut`. A move is kept only if it does not
    increase the direction energy.
    """
    p = np.asarray(p, dtype=float)
    candidates = candidates if candidates is not None else candidate_directions(p)
    energy = DirectionEnergy(spec, p, eps_eq)
    n, k = p.shape
    d = np.zeros((n, k))
    current = 0.0
    energies = [current]
    movable = np.ones(n, dtype=bool)
    for j in range(1, k):
        proposal = candidates.toward((candidates.top + j) % k)
        trial = _move(energy, d, proposal, movable)
        value = energy.energy(trial)
        if value <= current:
            d, current = trial, value
        energies.append(current)
    return ExpansionResult(d, current, energies, cuts=k - 1)


@dataclass
class MultiSolution:
    x: np.ndarray
    partition: Partition
    xi: np.ndarray
    trace: SolveTrace
    move_energies: list[list[float]] = field(default_factory=list)

    @property
    def objective(self) -> float:
        return self.trace.records[-1].objective

    @property
    def iterations(self) -> int:
        return len(self.trace.records)


def cut_pursuit_multidim(spec: MultiProblemSpec, options: SolveOptions | None = None) -> MultiSolution:
    """Cut-pursuit loop with expansion-move directions; no optimality certificate."""
    opts = options if options is not None else SolveOptions()
    graph = spec.graph
    n = graph.vertex_count
    if n == 0:
        raise ValueError("empty graph")
    partition = opts.initial_partition if opts.initial_partition is not None else Partition.whole(n)
    xi = project_simplex(np.zeros((len(partition), spec.k)))
    trace = SolveTrace()
    moves: list[list[float]] = []
    start = time.perf_counter()
    rtol = opts.reduced_tol
    x_prev = None

    for it in range(1, opts.max_iter + 1):
        reduced = build_reduced_graph(graph, partition)
        problem = ReducedProblem(spec, partition, reduced)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            sol = solve_reduced(spec, partition, xi, rtol, opts.reduced_max_iter, problem=problem)
        eps_snap = _auto_eps(opts.eps_snap, opts.tol_x, sol.xi)
        xi = spec.nonsmooth.snap(sol.xi, eps_snap)
        merge_eps = _auto_eps(opts.merge_eps, opts.tol_x, xi)
        if merge_eps > 0:
            partition, xi = merge_close_components(graph, partition, xi, merge_eps, reduced)
            xi = spec.nonsmooth.snap(xi, eps_snap)
        x = lift(partition, xi)
        eps_eq = _auto_eps(opts.eps_eq, opts.tol_x, x)
        result = alpha_expansion_direction(spec, x, candidate_directions(x), eps_eq)
        moves.append(result.energies)

        evolution = np.inf
        if x_prev is not None:
            evolution = float(np.linalg.norm(x - x_prev) / max(np.linalg.norm(x), 1e-300))
        record = TraceRecord(
            iteration=it,
            elapsed=time.perf_counter() - start,
            objective=multi_objective(spec, x),
            n_components=len(partition),
            dir_deriv=result.value,
            reduced_iterations=sol.iterations,
            reduced_converged=sol.converged,
            evolution=evolution,
        )
        trace.records.append(record)
        if -result.value <= opts.tol_dir:
            trace.stop_reason = "stationary"
            break
        if evolution <= opts.tol_x:
            trace.stop_reason = "iterate_evolution"
            break
        refined = refine_partition(graph, partition, result.d)
        record.n_split = len(refined) - len(partition)
        if record.n_split == 0:
            trace.stop_reason = "no_refinement"
            break
        if it == opts.max_iter:
            trace.stop_reason = "max_iter"
            break
        first_vertex = np.array([c[0] for c in refined.components], dtype=np.int64)
        xi = xi[partition.labels[first_vertex]]
        partition = refined
        x_prev = x

    return MultiSolution(x=x, partition=partition, xi=xi, trace=trace, move_energies=moves)
