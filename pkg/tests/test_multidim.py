import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _instances import random_graph
from cutpursuit.driver import SolveOptions
from cutpursuit.generators import multilabel_grid
from cutpursuit.graph import Partition
from cutpursuit.multidim import (
    DirectionEnergy,
    KLFidelity,
    MultiProblemSpec,
    SimplexIndicator,
    alpha_expansion_direction,
    binary_move_cut,
    candidate_directions,
    cut_pursuit_multidim,
    min_pairwise_binary,
    multi_objective,
    project_simplex,
)
from cutpursuit.reduced import baseline_solve

seeds = st.integers(0, 2**32 - 1)


def random_multi(rng, n=None, k=None, sparse_p=True):
    n = int(rng.integers(2, 9)) if n is None else n
    k = int(rng.integers(2, 5)) if k is None else k
    q = rng.dirichlet(np.ones(k), n)
    spec = MultiProblemSpec(random_graph(rng, n), KLFidelity(q, float(rng.uniform(0.05, 0.9))))
    p = rng.dirichlet(np.ones(k), n)
    if sparse_p:
        # put some vertices on faces and vertices of the simplex, and copy neighbors
        for v in range(n):
            r = rng.random()
            if r < 0.3:
                p[v] = np.eye(k)[rng.integers(k)]
            elif r < 0.5:
                p[v, rng.integers(k)] = 0.0
                p[v] /= p[v].sum()
        for a, b in zip(spec.graph.u, spec.graph.v):
            if rng.random() < 0.3:
                p[b] = p[a]
    return spec, p


def projection_by_bisection(x):
    lo, hi = x.min() - 1.0, x.max()
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.maximum(x - mid, 0).sum() > 1:
            lo = mid
        else:
            hi = mid
    return np.maximum(x - 0.5 * (lo + hi), 0)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=8))
def test_project_simplex(values):
    x = np.array(values)
    p = project_simplex(x)[0]
    assert p.sum() == pytest.approx(1.0, abs=1e-12)
    assert p.min() >= 0
    assert p == pytest.approx(projection_by_bisection(x), abs=1e-9)


def test_kl_fidelity():
    rng = np.random.default_rng(0)
    q = rng.dirichlet(np.ones(3), 5)
    f = KLFidelity(q, 0.2)
    assert f.value(q) == pytest.approx(0.0, abs=1e-14)
    for _ in range(20):
        p = rng.dirichlet(np.ones(3), 5)
        assert f.value(p) > 0
    p = rng.dirichlet(np.ones(3), 5)
    h = 1e-6
    g = f.gradient(p)
    for idx in itertools.product(range(5), range(3)):
        e = np.zeros_like(p)
        e[idx] = h
        fd = (f.value(p + e) - f.value(p - e)) / (2 * h)
        assert g[idx] == pytest.approx(fd, rel=1e-6, abs=1e-7)
    with pytest.raises(ValueError):
        KLFidelity(q, 1.0)
    with pytest.raises(ValueError):
        KLFidelity(q * 2, 0.5)


def test_kl_curvature_dominates_hessian():
    rng = np.random.default_rng(1)
    q = rng.dirichlet(np.ones(3), 6)
    f = KLFidelity(q, 0.3)
    part = Partition(np.array([0, 0, 1, 1, 1, 2]))
    bound = f.curvature(part)
    for _ in range(10):
        p = rng.dirichlet(np.ones(3), 6)
        s = f.beta / 3 + (1 - f.beta) * p
        hess = (1 - f.beta) ** 2 * f.r / s**2
        assert np.all(part.group_sum(hess) <= bound + 1e-12)


def test_simplex_indicator():
    ind = SimplexIndicator(2)
    p = np.array([[1.0, 0.0], [0.5, 0.5]])
    assert ind.value(p) == 0.0
    assert ind.value(p + 0.1) == np.inf
    d = np.array([[1.0, -1.0], [1.0, -1.0]])
    assert ind.dir_deriv(p, d).tolist() == [np.inf, 0.0]
    assert ind.dir_deriv(p, np.ones((2, 2))).tolist() == [np.inf, np.inf]
    snapped = ind.snap(np.array([[1e-12, 1 - 1e-12], [0.3, 0.7]]), 1e-9)
    assert snapped.tolist() == [[0.0, 1.0], [0.3, 0.7]]


@settings(max_examples=60, deadline=None)
@given(seeds)
def test_direction_energy_matches_objective_quotient(seed):
    rng = np.random.default_rng(seed)
    spec, p = random_multi(rng)
    energy = DirectionEnergy(spec, p)
    cand = candidate_directions(p)
    labels = rng.integers(0, spec.k, spec.vertex_count)
    d = cand.toward(labels) * (rng.random(spec.vertex_count) < 0.6)[:, None]
    value = energy.energy(d)
    assert np.isfinite(value)  # moves away from the top label are always feasible
    t = 1e-7
    quotient = (multi_objective(spec, p + t * d) - multi_objective(spec, p)) / t
    assert value == pytest.approx(quotient, rel=1e-4, abs=1e-4)


@settings(max_examples=60, deadline=None)
@given(seeds)
def test_candidates_are_feasible(seed):
    rng = np.random.default_rng(seed)
    _, p = random_multi(rng)
    cand = candidate_directions(p)
    for v, options in enumerate(cand.sets()):
        assert np.all(options.sum(axis=1) == 0)
        assert np.any(np.all(options == 0, axis=1))
        ok = SimplexIndicator(1).dir_deriv(np.repeat(p[v : v + 1], len(options), 0), options)
        assert np.all(ok == 0)


@settings(max_examples=60, deadline=None)
@given(seeds)
def test_binary_move_cut_is_exact(seed):
    rng = np.random.default_rng(seed)
    spec, p = random_multi(rng)
    n = spec.vertex_count
    cand = candidate_directions(p)
    dbar = cand.toward(rng.integers(0, spec.k, n))
    energy = DirectionEnergy(spec, p)
    g = spec.graph
    zero = np.zeros_like(dbar)
    # submodularity of every edge table
    A = energy.pair(zero[g.u], zero[g.v])
    D = energy.pair(dbar[g.u], dbar[g.v])
    B = energy.pair(zero[g.u], dbar[g.v])
    C = energy.pair(dbar[g.u], zero[g.v])
    assert np.all(A + D <= B + C + 1e-12)
    d, value = binary_move_cut(spec, p, dbar)
    best = min(energy.energy(np.array(bits)[:, None] * dbar) for bits in itertools.product((0, 1), repeat=n))
    assert value == pytest.approx(best, abs=1e-9)
    assert value <= 0.0
    assert energy.energy(d) == pytest.approx(value)


def test_min_pairwise_binary_exhaustive():
    rng = np.random.default_rng(3)
    for _ in range(40):
        n = int(rng.integers(1, 7))
        g = random_graph(rng, n)
        t0, t1 = rng.normal(size=n), rng.normal(size=n)
        t1[rng.random(n) < 0.2] = np.inf
        A, B, C = rng.uniform(0, 1, (3, g.edge_count))
        D = B + C - A - rng.uniform(0, 1, g.edge_count)
        z = min_pairwise_binary(t0, t1, g.u, g.v, A, B, C, D)

        def energy(z):
            un = np.where(z == 1, t1, t0).sum()
            table = np.select([(z[g.u] == 0) & (z[g.v] == 0), (z[g.u] == 0) & (z[g.v] == 1), (z[g.u] == 1) & (z[g.v] == 0)], [A, B, C], D)
            return un + table.sum()

        best = min(energy(np.array(bits)) for bits in itertools.product((0, 1), repeat=n))
        assert energy(z) == pytest.approx(best, abs=1e-9)
    with pytest.raises(ValueError):
        min_pairwise_binary(np.zeros(2), np.zeros(2), np.array([0]), np.array([1]), np.zeros(1), np.zeros(1), np.zeros(1), np.ones(1))


@settings(max_examples=60, deadline=None)
@given(seeds)
def test_expansion_moves_never_increase(seed):
    rng = np.random.default_rng(seed)
    spec, p = random_multi(rng)
    res = alpha_expansion_direction(spec, p)
    assert np.all(np.diff(res.energies) <= 0)
    assert res.value <= 0
    assert res.cuts == spec.k - 1
    assert DirectionEnergy(spec, p).energy(res.d) == pytest.approx(res.value)
    if spec.k == 2:
        dbar = candidate_directions(p).toward(1 - candidate_directions(p).top)
        assert res.value == pytest.approx(binary_move_cut(spec, p, dbar)[1], abs=1e-12)


def test_multilabel_grid_solution():
    inst = multilabel_grid(6, 6, 3, seed=2)
    spec = inst.spec()
    sol = cut_pursuit_multidim(spec)
    assert np.all(np.abs(sol.x.sum(axis=1) - 1) <= 1e-8)
    assert sol.x.min() >= -1e-8
    objs = sol.trace.objectives
    assert np.all(np.diff(objs) <= SolveOptions().reduced_tol * (1 + np.abs(objs[:-1])))
    ref = baseline_solve(spec, tol=1e-9, max_iter=200_000, checkpoint=0)
    assert sol.objective <= multi_objective(spec, ref.x) * 1.05
    # the label map recovers the two halves
    assert np.array_equal(np.argmax(sol.x, axis=1), inst.truth.astype(int))


def test_multidim_spec_checks():
    rng = np.random.default_rng(0)
    q = rng.dirichlet(np.ones(3), 4)
    with pytest.raises(ValueError):
        MultiProblemSpec(random_graph(rng, 5), KLFidelity(q, 0.5))
