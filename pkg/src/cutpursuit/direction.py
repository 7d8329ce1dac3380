"""Steepest descent directions over finite sets, computed with minimum cuts.

The ternary problem minimizes ``d -> F'(x, d)`` over ``{-1, 0, +1}^V``.
Two equivalent routes are provided: a single two-stage flow network
(each vertex gets two nodes stacked between source and sink), and two
single-stage cuts over ``{0, +1}^V`` and ``{-1, 0}^V`` whose minimizers add
up, because ``F'(x, d) = F'(x, min(d, 0)) + F'(x, max(d, 0))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .functional import (
    ProblemSpec,
    VertexDeltas,
    dir_deriv_from_deltas,
    equal_edges,
    vertex_deltas,
)
from .graph import WeightedGraph
from .maxflow import FlowNetwork, max_flow_min_cut

__all__ = [
    "TernaryDirection",
    "TernaryNetwork",
    "build_ternary_network",
    "cut_configuration",
    "decode_ternary_cut",
    "ternary_from_deltas",
    "two_cuts_from_deltas",
    "steepest_ternary_direction",
    "steepest_ternary_two_cuts",
    "steepest_binary_direction",
    "exhaustive_direction_oracle",
    "enumerate_dir_derivs",
    "is_sign_segregated",
    "min_binary_labeling",
]

SS, ST, TS, TT = "SS", "ST", "TS", "TT"


@dataclass(frozen=True)
class TernaryDirection:
    d: np.ndarray
    value: float
    cut_value: float | None = None

    @property
    def counts(self) -> dict[int, int]:
        return {k: int(np.sum(self.d == k)) for k in (-1, 0, 1)}


@dataclass
class TernaryNetwork:
    """Two-stage network with node ids ``v`` (first stage), ``n + v`` (second
    stage), ``2n`` (source) and ``2n + 1`` (sink)."""

    network: FlowNetwork
    n: int
    source_caps: np.ndarray
    middle_caps: np.ndarray
    sink_caps: np.ndarray
    offsets: np.ndarray
    horizontal: list[tuple[int, int, float]]


def build_ternary_network(
    deltas: VertexDeltas, graph: WeightedGraph, equal: np.ndarray
) -> TernaryNetwork:
    n = graph.vertex_count
    m = deltas.offsets
    c_src = -deltas.delta_minus + m
    c_mid = m.copy()
    c_snk = deltas.delta_plus + m
    if np.any(c_src < 0) or np.any(c_mid < 0) or np.any(c_snk < 0):
        raise ArithmeticError("negative capacity in ternary network")
    s, t = 2 * n, 2 * n + 1
    net = FlowNetwork(2 * n + 2, s, t)
    idx = np.arange(n)
    net.add_arcs(np.full(n, s), idx, c_src)
    net.add_arcs(idx, n + idx, c_mid)
    net.add_arcs(n + idx, np.full(n, t), c_snk)
    u, v, w = graph.u[equal], graph.v[equal], graph.w[equal]
    net.add_arcs(np.concatenate([u, n + u]), np.concatenate([v, n + v]), np.tile(w, 2), np.tile(w, 2))
    horizontal = list(zip(u.tolist(), v.tolist(), w.tolist()))
    return TernaryNetwork(net, n, c_src, c_mid, c_snk, m, horizontal)


def cut_configuration(side: np.ndarray, n: int) -> list[str]:
    """Configuration of each vertex given the source-side mask of a cut."""
    names = {(True, True): SS, (True, False): ST, (False, True): TS, (False, False): TT}
    return [names[(bool(side[v]), bool(side[n + v]))] for v in range(n)]


def decode_ternary_cut(side: np.ndarray, n: int) -> np.ndarray:
    """Direction of a cut after moving every TS vertex to SS.

    SS maps to +1, ST to 0 and TT to -1.
    """
    first, second = side[:n], side[n : 2 * n]
    d = np.zeros(n, dtype=np.int8)
    d[second] = 1  # SS, and TS switched to SS
    d[~first & ~second] = -1
    return d


def _check_identity(value: float, flow: float, offset_sum: float) -> None:
    scale = 1.0 + abs(flow) + offset_sum
    if not abs(value + offset_sum - flow) <= 1e-9 * scale:
        raise ArithmeticError(
            f"cut/direction identity violated: F'={value}, sum m={offset_sum}, cut={flow}"
        )


def ternary_from_deltas(
    deltas: VertexDeltas, graph: WeightedGraph, equal: np.ndarray
) -> TernaryDirection:
    tn = build_ternary_network(deltas, graph, equal)
    flow, side = max_flow_min_cut(tn.network)
    d = decode_ternary_cut(side, tn.n)
    value = dir_deriv_from_deltas(deltas, graph, equal, d)
    _check_identity(value, flow, float(tn.offsets.sum()))
    return TernaryDirection(d, value, flow)


def min_binary_labeling(
    unary: np.ndarray, u: np.ndarray, v: np.ndarray, w: np.ndarray
) -> tuple[np.ndarray, float]:
    """Minimize ``sum_v unary_v z_v + sum_e w_e |z_u - z_v|`` over ``z in {0,1}^n``.

    ``unary`` may contain ``+inf`` (``z_v = 1`` forbidden). Returns the
    labeling and its energy.
    """
    n = len(unary)
    s, t = n, n + 1
    net = FlowNetwork(n + 2, s, t)
    unary = np.asarray(unary, dtype=float)
    idx = np.arange(n)
    net.add_arcs(idx, np.full(n, t), np.maximum(unary, 0.0))
    net.add_arcs(np.full(n, s), idx, np.maximum(-unary, 0.0))
    const = float(np.sum(unary[unary < 0]))
    net.add_arcs(u, v, w, w)
    flow, side = max_flow_min_cut(net)
    return side[:n].astype(np.int8), flow + const


def two_cuts_from_deltas(
    deltas: VertexDeltas, graph: WeightedGraph, equal: np.ndarray
) -> TernaryDirection:
    u, v, w = graph.u[equal], graph.v[equal], graph.w[equal]
    up, _ = min_binary_labeling(deltas.delta_plus, u, v, w)
    down, _ = min_binary_labeling(-deltas.delta_minus, u, v, w)
    d = (up - down).astype(np.int8)
    return TernaryDirection(d, dir_deriv_from_deltas(deltas, graph, equal, d))


def _prepare(spec: ProblemSpec, x: np.ndarray, eps_eq: float):
    x = np.asarray(x, dtype=float)
    return vertex_deltas(spec, x, eps_eq), equal_edges(spec.graph, x, eps_eq)


def steepest_ternary_direction(spec: ProblemSpec, x: np.ndarray, eps_eq: float = 0.0) -> TernaryDirection:
    """Minimizer of ``F'(x, .)`` over ``{-1, 0, +1}^V`` from the two-stage cut."""
    deltas, equal = _prepare(spec, x, eps_eq)
    return ternary_from_deltas(deltas, spec.graph, equal)


def steepest_ternary_two_cuts(spec: ProblemSpec, x: np.ndarray, eps_eq: float = 0.0) -> TernaryDirection:
    """Same minimum value as :func:`steepest_ternary_direction`, with two one-stage cuts."""
    deltas, equal = _prepare(spec, x, eps_eq)
    return two_cuts_from_deltas(deltas, spec.graph, equal)


def steepest_binary_direction(
    spec: ProblemSpec, x: np.ndarray, eps_eq: float = 0.0, smooth_tol: float = 1e-12
) -> tuple[np.ndarray, float]:
    """Minimizer over ``{-1, +1}^V``, valid where ``F`` is smooth at every vertex.

    Raises
    ------
    ValueError
        If some vertex has distinct one-sided slopes.
    """
    deltas, equal = _prepare(spec, x, eps_eq)
    dp, dm = deltas.delta_plus, deltas.delta_minus
    bad = ~np.isfinite(dp) | ~np.isfinite(dm) | (np.abs(dp - dm) > smooth_tol * (1 + np.abs(dp)))
    if np.any(bad):
        raise ValueError(
            f"F is not differentiable along coordinates {np.flatnonzero(bad)[:10].tolist()}; "
            "use the ternary direction"
        )
    g = spec.graph
    z, _ = min_binary_labeling(2 * dp, g.u[equal], g.v[equal], 2 * g.w[equal])
    d = (2 * z.astype(np.int64) - 1).astype(np.int8)
    return d, dir_deriv_from_deltas(deltas, g, equal, d)


def enumerate_dir_derivs(
    deltas: VertexDeltas,
    graph: WeightedGraph,
    equal: np.ndarray,
    directions: np.ndarray,
) -> np.ndarray:
    """``F'(x, d)`` for each row of ``directions`` (vectorized formula)."""
    D = np.asarray(directions, dtype=float)
    with np.errstate(invalid="ignore"):
        unary = np.where(D > 0, deltas.delta_plus * D, 0.0) + np.where(D < 0, deltas.delta_minus * D, 0.0)
    u, v, w = graph.u[equal], graph.v[equal], graph.w[equal]
    return unary.sum(axis=1) + np.abs(D[:, u] - D[:, v]) @ w


def exhaustive_direction_oracle(
    spec: ProblemSpec,
    x: np.ndarray,
    alphabet: Sequence[float],
    eps_eq: float = 0.0,
    max_size: int = 10**7,
) -> tuple[np.ndarray, float]:
    """Exact minimizer of ``F'(x, .)`` over ``alphabet^V`` by enumeration."""
    alphabet = np.asarray(sorted(set(float(a) for a in alphabet)))
    n = spec.vertex_count
    total = len(alphabet) ** n
    if total > max_size:
        raise ValueError(f"{len(alphabet)}^{n} = {total} directions exceeds the limit {max_size}")
    deltas, equal = _prepare(spec, x, eps_eq)
    best_d, best_val = None, math.inf
    chunk = 1 << 16
    powers = len(alphabet) ** np.arange(n)
    for start in range(0, total, chunk):
        idx = np.arange(start, min(total, start + chunk))
        digits = (idx[:, None] // powers) % len(alphabet)
        D = alphabet[digits]
        vals = enumerate_dir_derivs(deltas, spec.graph, equal, D)
        i = int(np.argmin(vals))
        if best_d is None or vals[i] < best_val:
            best_d, best_val = D[i].copy(), float(vals[i])
    return best_d, best_val


def is_sign_segregated(graph: WeightedGraph, d: np.ndarray, eps: float = 0.0) -> bool:
    """True iff neighbors with the same sign carry values within ``eps``."""
    d = np.asarray(d, dtype=float)
    du, dv = d[graph.u], d[graph.v]
    same = np.sign(du) == np.sign(dv)
    return bool(np.all(np.abs(du - dv)[same] <= eps))
