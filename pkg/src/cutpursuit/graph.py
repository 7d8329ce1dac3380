"""Weighted graphs, vertex partitions and reduced graphs.

Vertex values handled here may be scalar (arrays of shape ``(n,)``) or
vector-valued (shape ``(n, K)``); equality of vector values is tested with
the max-norm.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components as _cc

__all__ = [
    "WeightedGraph",
    "Partition",
    "ReducedGraph",
    "connected_components",
    "build_reduced_graph",
    "refine_partition",
    "merge_close_components",
    "chain_graph",
    "grid_graph",
]


class WeightedGraph:
    """Undirected graph with strictly positive edge weights.

    Parameters
    ----------
    vertex_count : int
        Number of vertices, labelled ``0 .. vertex_count - 1``.
    edges : sequence of (u, v, w)
        Edge records. Zero-weight edges are dropped, repeated unordered
        pairs are merged by summing their weights (the total variation is
        additive over edges, so this leaves the functional unchanged).
    """

    def __init__(self, vertex_count: int, edges: Sequence[Sequence[float]] = ()):
        vertex_count = int(vertex_count)
        if vertex_count < 0:
            raise ValueError(f"vertex_count must be nonnegative, got {vertex_count}")
        arr = np.asarray(edges, dtype=float).reshape(-1, 3)
        u = arr[:, 0].astype(np.int64)
        v = arr[:, 1].astype(np.int64)
        w = arr[:, 2]
        if np.any(u != arr[:, 0]) or np.any(v != arr[:, 1]):
            raise ValueError("edge endpoints must be integers")
        if len(u) and (min(u.min(), v.min()) < 0 or max(u.max(), v.max()) >= vertex_count):
            raise ValueError("edge endpoint out of range")
        if np.any(u == v):
            raise ValueError("self-loops are not allowed")
        if np.any(~np.isfinite(w)) or np.any(w < 0):
            raise ValueError("edge weights must be finite and nonnegative")
        keep = w > 0
        u, v, w = u[keep], v[keep], w[keep]
        lo, hi = np.minimum(u, v), np.maximum(u, v)
        if len(lo):
            key = lo * vertex_count + hi
            uniq, inv = np.unique(key, return_inverse=True)
            w = np.bincount(inv, weights=w, minlength=len(uniq))
            lo, hi = uniq // vertex_count, uniq % vertex_count
        self.vertex_count = vertex_count
        self.u = lo.astype(np.int64)
        self.v = hi.astype(np.int64)
        self.w = np.asarray(w, dtype=float)
        self.u.flags.writeable = False
        self.v.flags.writeable = False
        self.w.flags.writeable = False

    @property
    def edge_count(self) -> int:
        return len(self.w)

    @property
    def edges(self) -> list[tuple[int, int, float]]:
        return list(zip(self.u.tolist(), self.v.tolist(), self.w.tolist()))

    def scaled(self, factor: float) -> "WeightedGraph":
        return WeightedGraph(self.vertex_count, np.column_stack([self.u, self.v, self.w * factor]))

    def total_variation(self, x: np.ndarray) -> float:
        """Weighted sum of ``|x_u - x_v|`` (l1 norm for vector values)."""
        diff = np.abs(x[self.u] - x[self.v])
        if diff.ndim > 1:
            diff = diff.sum(axis=1)
        return float(self.w @ diff)

    def __repr__(self) -> str:
        return f"WeightedGraph(vertex_count={self.vertex_count}, edge_count={self.edge_count})"


def chain_graph(n: int, weight: float = 1.0) -> WeightedGraph:
    idx = np.arange(n - 1)
    return WeightedGraph(n, np.column_stack([idx, idx + 1, np.full(n - 1, float(weight))]))


def grid_graph(rows: int, cols: int, weight: float = 1.0) -> WeightedGraph:
    """4-connected grid, vertex ``r * cols + c``."""
    ids = np.arange(rows * cols).reshape(rows, cols)
    horiz = np.column_stack([ids[:, :-1].ravel(), ids[:, 1:].ravel()])
    vert = np.column_stack([ids[:-1, :].ravel(), ids[1:, :].ravel()])
    pairs = np.vstack([horiz, vert])
    return WeightedGraph(rows * cols, np.column_stack([pairs, np.full(len(pairs), float(weight))]))


def _label_components(n: int, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Connected-component labels of the graph ``(range(n), zip(u, v))``.

    Labels are renumbered by order of first appearance so that results are
    deterministic and independent of scipy's internal numbering.
    """
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    adj = coo_matrix((np.ones(len(u)), (u, v)), shape=(n, n))
    _, raw = _cc(adj, directed=False)
    return _first_appearance(raw)


def _first_appearance(labels: np.ndarray) -> np.ndarray:
    _, first, inv = np.unique(labels, return_index=True, return_inverse=True)
    rank = np.empty(len(first), dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(len(first))
    return rank[inv.reshape(-1)]


@dataclass(frozen=True)
class Partition:
    """Partition of the vertex set into components.

    ``labels[v]`` is the component id of vertex ``v``; ids run over
    ``0 .. len(partition) - 1`` and are numbered by first appearance.
    """

    labels: np.ndarray
    components: tuple[np.ndarray, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        labels = _first_appearance(np.asarray(self.labels, dtype=np.int64))
        labels.flags.writeable = False
        object.__setattr__(self, "labels", labels)
        order = np.argsort(labels, kind="stable")
        bounds = np.flatnonzero(np.diff(labels[order])) + 1
        comps = tuple(np.split(order, bounds)) if len(labels) else ()
        object.__setattr__(self, "components", comps)

    @classmethod
    def whole(cls, n: int) -> "Partition":
        return cls(np.zeros(n, dtype=np.int64))

    @classmethod
    def singletons(cls, n: int) -> "Partition":
        return cls(np.arange(n))

    @classmethod
    def from_components(cls, n: int, components: Sequence[Sequence[int]]) -> "Partition":
        labels = np.full(n, -1, dtype=np.int64)
        for i, comp in enumerate(components):
            if np.any(labels[list(comp)] >= 0):
                raise ValueError("components overlap")
            labels[list(comp)] = i
        if np.any(labels < 0):
            raise ValueError("components do not cover all vertices")
        return cls(labels)

    def __len__(self) -> int:
        return len(self.components)

    @property
    def component_of(self) -> np.ndarray:
        return self.labels

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=len(self)).astype(float)

    def as_sets(self) -> list[frozenset[int]]:
        return [frozenset(c.tolist()) for c in self.components]

    def same_as(self, other: "Partition") -> bool:
        return np.array_equal(self.labels, other.labels)

    def is_connected(self, graph: WeightedGraph) -> bool:
        """Whether every component induces a connected subgraph."""
        inside = self.labels[graph.u] == self.labels[graph.v]
        sub = _label_components(graph.vertex_count, graph.u[inside], graph.v[inside])
        return len(np.unique(sub)) == len(self)

    def group_sum(self, values: np.ndarray) -> np.ndarray:
        """Sum of per-vertex ``values`` over each component."""
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            return np.bincount(self.labels, weights=values, minlength=len(self))
        out = np.zeros((len(self),) + values.shape[1:])
        np.add.at(out, self.labels, values)
        return out


@dataclass(frozen=True)
class ReducedGraph:
    """Graph over the components of a partition.

    ``edge_u[e] < edge_v[e]`` are component ids and ``weights[e]`` sums the
    original edge weights crossing the pair.
    """

    partition: Partition
    edge_u: np.ndarray
    edge_v: np.ndarray
    weights: np.ndarray

    @property
    def components(self) -> tuple[np.ndarray, ...]:
        return self.partition.components

    @property
    def reduced_edges(self) -> list[tuple[int, int, float]]:
        return list(zip(self.edge_u.tolist(), self.edge_v.tolist(), self.weights.tolist()))


def connected_components(
    graph: WeightedGraph,
    subset: Sequence[int] | np.ndarray,
    same: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None,
) -> list[frozenset[int]]:
    """Maximal subsets of ``subset`` connected through edges satisfying ``same``.

    ``same(u, v)`` receives arrays of endpoints and returns a boolean mask;
    ``None`` accepts every edge.
    """
    subset = np.unique(np.asarray(subset, dtype=np.int64))
    if len(subset) == 0:
        return []
    inside = np.zeros(graph.vertex_count, dtype=bool)
    inside[subset] = True
    keep = inside[graph.u] & inside[graph.v]
    u, v = graph.u[keep], graph.v[keep]
    if same is not None and len(u):
        ok = np.asarray(same(u, v), dtype=bool)
        u, v = u[ok], v[ok]
    local = np.full(graph.vertex_count, -1, dtype=np.int64)
    local[subset] = np.arange(len(subset))
    labels = _label_components(len(subset), local[u], local[v])
    groups: dict[int, list[int]] = {}
    for vert, lab in zip(subset.tolist(), labels.tolist()):
        groups.setdefault(lab, []).append(vert)
    return [frozenset(g) for g in groups.values()]


def build_reduced_graph(graph: WeightedGraph, partition: Partition) -> ReducedGraph:
    cu = partition.labels[graph.u]
    cv = partition.labels[graph.v]
    cross = cu != cv
    a = np.minimum(cu[cross], cv[cross])
    b = np.maximum(cu[cross], cv[cross])
    n = max(len(partition), 1)
    if len(a):
        uniq, inv = np.unique(a * n + b, return_inverse=True)
        weights = np.bincount(inv, weights=graph.w[cross], minlength=len(uniq))
        a, b = uniq // n, uniq % n
    else:
        weights = np.zeros(0)
    return ReducedGraph(partition, a.astype(np.int64), b.astype(np.int64), weights)


def _close(values: np.ndarray, i: np.ndarray, j: np.ndarray, eps: float) -> np.ndarray:
    diff = np.abs(values[i] - values[j])
    if diff.ndim > 1:
        diff = diff.max(axis=1)
    return diff <= eps


def refine_partition(
    graph: WeightedGraph, partition: Partition, d: np.ndarray, eps: float = 0.0
) -> Partition:
    """Split every component into the constant connected components of ``d``."""
    d = np.asarray(d, dtype=float)
    inside = partition.labels[graph.u] == partition.labels[graph.v]
    u, v = graph.u[inside], graph.v[inside]
    keep = _close(d, u, v, eps)
    return Partition(_label_components(graph.vertex_count, u[keep], v[keep]))


def merge_close_components(
    graph: WeightedGraph,
    partition: Partition,
    values: np.ndarray,
    merge_eps: float,
    reduced: ReducedGraph | None = None,
) -> tuple[Partition, np.ndarray]:
    """Merge adjacent components whose values differ by at most ``merge_eps``.

    Merging is transitive along chains of close adjacent components. The
    merged value is the size-weighted mean of the merged values.
    """
    values = np.asarray(values, dtype=float)
    if merge_eps < 0:
        raise ValueError("merge_eps must be nonnegative")
    if reduced is None:
        reduced = build_reduced_graph(graph, partition)
    close = _close(values, reduced.edge_u, reduced.edge_v, merge_eps)
    if not np.any(close):
        return partition, values
    groups = _label_components(len(partition), reduced.edge_u[close], reduced.edge_v[close])
    sizes = partition.sizes
    mass = np.bincount(groups, weights=sizes)
    if values.ndim == 1:
        merged = np.bincount(groups, weights=values * sizes) / mass
    else:
        merged = np.zeros((len(mass),) + values.shape[1:])
        np.add.at(merged, groups, values * sizes[:, None])
        merged /= mass[:, None]
    new = Partition(groups[partition.labels])
    # renumbering by first vertex appearance may permute the group ids
    first_vertex = np.array([c[0] for c in new.components], dtype=np.int64)
    return new, merged[groups[partition.labels[first_vertex]]]
