"""Random small instances and independent oracles shared by the tests."""

from __future__ import annotations

import numpy as np

from cutpursuit.functional import (
    BoxIndicator,
    NonnegIndicator,
    ProblemSpec,
    QuadraticFidelity,
    Separable,
    WeightedAbs,
    WeightedAbsPlusNonneg,
    Zero,
    objective,
)
from cutpursuit.graph import WeightedGraph


def random_graph(rng, n, p=0.4, wmin=0.1, wmax=2.0):
    edges = []
    for u in range(n):
        for v in range(u + 1, n):
            if rng.random() < p:
                edges.append((u, v, float(rng.uniform(wmin, wmax))))
    # keep it connected through a random spanning chain
    order = rng.permutation(n)
    for a, b in zip(order[:-1], order[1:]):
        if rng.random() < 0.7:
            edges.append((int(min(a, b)), int(max(a, b)), float(rng.uniform(wmin, wmax))))
    return WeightedGraph(n, edges)


def random_term(rng):
    kind = rng.integers(5)
    if kind == 0:
        return Zero()
    if kind == 1:
        return WeightedAbs(float(rng.uniform(0.1, 2.0)))
    if kind == 2:
        return NonnegIndicator()
    if kind == 3:
        a = float(rng.uniform(-2.0, 0.0))
        return BoxIndicator(a, a + float(rng.uniform(0.5, 3.0)))
    return WeightedAbsPlusNonneg(float(rng.uniform(0.1, 2.0)))


def random_point(rng, terms, graph, p_kink=0.35, p_tie=0.3):
    """Point in the domain; coordinates sit on kinks or copy a neighbor with some probability.

    Distinct values are kept at least 1e-3 apart from each other and from
    every kink, so one-sided difference quotients are exact for small steps.
    """
    n = len(terms)
    x = np.empty(n)
    kinks = sorted({k for t in terms for k in t.kinks()} | {0.0})
    for v, t in enumerate(terms):
        if rng.random() < p_kink and t.kinks():
            x[v] = rng.choice(t.kinks())
            continue
        lo = max(t.lower, -3.0)
        hi = min(t.upper, 3.0)
        for _ in range(100):
            c = float(rng.uniform(lo, hi))
            if all(abs(c - k) > 1e-3 for k in kinks) and all(abs(c - x[w]) > 1e-3 for w in range(v)):
                break
        x[v] = c
    for a, b, _ in graph.edges:
        if rng.random() < p_tie:
            val = x[a]
            if terms[b].lower <= val <= terms[b].upper:
                x[b] = val
    return x


def random_instance(rng, n=None, phi_prob=0.5):
    n = int(rng.integers(2, 13)) if n is None else n
    graph = random_graph(rng, n)
    terms = [random_term(rng) for _ in range(n)]
    if rng.random() < phi_prob:
        m = int(rng.integers(1, n + 3))
        smooth = QuadraticFidelity(rng.standard_normal(m), rng.standard_normal((m, n)))
    else:
        smooth = QuadraticFidelity(rng.standard_normal(n) * 2)
    spec = ProblemSpec(graph, smooth, Separable(terms))
    x = random_point(rng, terms, graph)
    return spec, x


def fd_dir_deriv(spec, x, d, t=1e-5):
    """One-sided derivative from objective values only.

    Along a ray the objective is quadratic plus piecewise linear, hence
    exactly ``F(x) + a t + b t^2`` below the first kink; Richardson
    extrapolation of two quotients returns ``a``.
    """
    d = np.asarray(d, dtype=float)
    f0 = objective(spec, x)
    f1 = objective(spec, x + t * d)
    f2 = objective(spec, x + 0.5 * t * d)
    if f1 == np.inf or f2 == np.inf:
        return np.inf
    return (4.0 * (f2 - f0) - (f1 - f0)) / t
