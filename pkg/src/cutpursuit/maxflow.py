"""Maximum flow / minimum cut with nonnegative, possibly infinite, capacities.

The solver follows Boykov and Kolmogorov's augmenting-path scheme: two
search trees grow from the source and the sink, an augmenting path is
found when they touch, and nodes orphaned by saturation are re-adopted
instead of restarting the search from scratch.
"""

from __future__ import annotations

import math
from collections import deque

import numpy as np

__all__ = ["FlowNetwork", "InfiniteFlowError", "max_flow_min_cut", "cut_capacity"]

_FREE, _S, _T = 0, 1, 2
_NONE, _ROOT = -1, -2


class InfiniteFlowError(ValueError):
    """Every source/sink cut has infinite capacity."""


class FlowNetwork:
    """Directed network stored as paired arcs (arc ``a`` and its reverse ``a ^ 1``).

    Parameters
    ----------
    node_count : int
        Number of nodes, terminals included.
    source, sink : int
        Terminal node ids.
    """

    def __init__(self, node_count: int, source: int, sink: int):
        if source == sink:
            raise ValueError("source and sink must differ")
        self.node_count = int(node_count)
        self.source = int(source)
        self.sink = int(sink)
        self.head: list[int] = []
        self.cap: list[float] = []
        self.out: list[list[int]] = [[] for _ in range(self.node_count)]

    def add_arc(self, tail: int, head: int, capacity: float, reverse_capacity: float = 0.0) -> int:
        """Add ``tail -> head`` (and its reverse); returns the forward arc id."""
        if capacity < 0 or reverse_capacity < 0 or math.isnan(capacity) or math.isnan(reverse_capacity):
            raise ValueError(f"capacities must be nonnegative, got {capacity}, {reverse_capacity}")
        a = len(self.head)
        self.head += [head, tail]
        self.cap += [float(capacity), float(reverse_capacity)]
        self.out[tail].append(a)
        self.out[head].append(a + 1)
        return a

    def add_arcs(self, tails, heads, capacities, reverse_capacities=None) -> None:
        """Vectorized :meth:`add_arc`; arcs with zero capacity both ways are skipped."""
        tails = np.asarray(tails, dtype=np.int64)
        heads = np.asarray(heads, dtype=np.int64)
        cap = np.asarray(capacities, dtype=float)
        rev = np.zeros_like(cap) if reverse_capacities is None else np.asarray(reverse_capacities, dtype=float)
        if np.any(~(cap >= 0)) or np.any(~(rev >= 0)):
            raise ValueError("capacities must be nonnegative")
        keep = (cap > 0) | (rev > 0)
        tails, heads, cap, rev = tails[keep].tolist(), heads[keep].tolist(), cap[keep], rev[keep]
        a = len(self.head)
        pairs = np.empty(2 * len(tails))
        pairs[0::2], pairs[1::2] = cap, rev
        ends = [None] * (2 * len(tails))
        ends[0::2], ends[1::2] = heads, tails
        self.head += ends
        self.cap += pairs.tolist()
        out = self.out
        for i, (t, h) in enumerate(zip(tails, heads)):
            out[t].append(a + 2 * i)
            out[h].append(a + 2 * i + 1)

    @property
    def arcs(self) -> list[tuple[int, int, float]]:
        """All arcs with nonzero capacity as ``(tail, head, capacity)``."""
        res = []
        for a in range(len(self.head)):
            if self.cap[a] > 0:
                res.append((self.head[a ^ 1], self.head[a], self.cap[a]))
        return res


def cut_capacity(network: FlowNetwork, source_side: np.ndarray) -> float:
    """Capacity of the arcs leaving ``source_side``."""
    total = 0.0
    for tail, head, c in network.arcs:
        if source_side[tail] and not source_side[head]:
            total += c
    return total


def max_flow_min_cut(network: FlowNetwork) -> tuple[float, np.ndarray]:
    """Maximum flow value and a minimum cut.

    Returns
    -------
    value : float
        Maximum flow value, equal to the capacity of the returned cut.
    source_side : ndarray of bool
        ``True`` for nodes on the source side of a minimum cut (the nodes
        reachable from the source in the final residual network).

    Raises
    ------
    InfiniteFlowError
        If some source-to-sink path has only infinite capacities.
    """
    n = network.node_count
    s, t = network.source, network.sink
    head = network.head
    r = list(network.cap)  # residual capacities
    out = network.out

    tree = [_FREE] * n
    parent = [_NONE] * n  # S: arc parent->v ; T: arc v->parent
    tree[s], tree[t] = _S, _T
    parent[s] = parent[t] = _ROOT
    active = deque([s, t])
    flow = 0.0

    def rooted(v: int) -> bool:
        while True:
            a = parent[v]
            if a == _ROOT:
                return True
            if a == _NONE:
                return False
            v = head[a ^ 1] if tree[v] == _S else head[a]

    while active:
        p = active[0]
        if tree[p] == _FREE:
            active.popleft()
            continue
        bridge = -1
        if tree[p] == _S:
            for a in out[p]:
                if r[a] > 0:
                    q = head[a]
                    if tree[q] == _FREE:
                        tree[q], parent[q] = _S, a
                        active.append(q)
                    elif tree[q] == _T:
                        bridge = a
                        break
        else:
            for a in out[p]:
                b = a ^ 1  # arc q -> p
                if r[b] > 0:
                    q = head[a]
                    if tree[q] == _FREE:
                        tree[q], parent[q] = _T, b
                        active.append(q)
                    elif tree[q] == _S:
                        bridge = b
                        break
        if bridge < 0:
            active.popleft()
            continue

        # augmentation along source-tree path + bridge + sink-tree path
        path = [bridge]
        v = head[bridge ^ 1]
        while parent[v] != _ROOT:
            path.append(parent[v])
            v = head[parent[v] ^ 1]
        v = head[bridge]
        while parent[v] != _ROOT:
            path.append(parent[v])
            v = head[parent[v]]
        delta = min(r[a] for a in path)
        if delta == math.inf:
            raise InfiniteFlowError("every s-t cut has infinite capacity")
        flow += delta
        orphans = deque()
        for a in path:
            r[a] -= delta
            r[a ^ 1] += delta
            if r[a] <= 0:
                r[a] = 0.0
                tail, hd = head[a ^ 1], head[a]
                if tree[tail] == _S and tree[hd] == _S and parent[hd] == a:
                    parent[hd] = _NONE
                    orphans.append(hd)
                elif tree[tail] == _T and tree[hd] == _T and parent[tail] == a:
                    parent[tail] = _NONE
                    orphans.append(tail)

        # adoption
        while orphans:
            o = orphans.popleft()
            side = tree[o]
            found = False
            for a in out[o]:
                q = head[a]
                if tree[q] != side:
                    continue
                arc = a ^ 1 if side == _S else a  # S: q->o ; T: o->q
                if r[arc] > 0 and rooted(q):
                    parent[o] = arc
                    found = True
                    break
            if found:
                continue
            for a in out[o]:
                q = head[a]
                if tree[q] != side:
                    continue
                arc = a ^ 1 if side == _S else a
                if r[arc] > 0:
                    active.append(q)
                pa = parent[q]
                if pa >= 0 and (head[pa ^ 1] if side == _S else head[pa]) == o:
                    parent[q] = _NONE
                    orphans.append(q)
            tree[o] = _FREE
            parent[o] = _NONE

    # minimal source set: nodes reachable in the residual network
    side = np.zeros(n, dtype=bool)
    side[s] = True
    stack = [s]
    while stack:
        p = stack.pop()
        for a in out[p]:
            if r[a] > 0:
                q = head[a]
                if not side[q]:
                    side[q] = True
                    stack.append(q)
    return flow, side
