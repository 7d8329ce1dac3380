import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _instances import random_instance
from cutpursuit.direction import exhaustive_direction_oracle
from cutpursuit.driver import TRACE_HEADER, SolveOptions, cut_pursuit
from cutpursuit.functional import InfeasibleError, ProblemSpec, QuadraticFidelity, Separable, objective
from cutpursuit.generators import eeg_like, fused1d, fused2d
from cutpursuit.graph import Partition, WeightedGraph, chain_graph
from cutpursuit.reduced import ConvergenceWarning, baseline_solve, lift

TIGHT = SolveOptions(tol_x=1e-12, reduced_tol_factor=1e-3, reduced_max_iter=200_000)


def feasible_instance(rng, n=None):
    while True:
        spec, _ = random_instance(rng, n=n)
        ns = spec.nonsmooth
        if ns.lower.max() <= ns.upper.min():
            return spec


def test_fused6():
    sol = cut_pursuit(fused1d(6).spec())
    assert sol.x == pytest.approx([1 / 3] * 3 + [14 / 3] * 3, abs=1e-5)
    assert sol.objective == pytest.approx(14 / 3, abs=1e-8)
    assert len(sol.partition) == 2
    assert sol.trace.stop_reason == "stationary"
    assert np.array_equal(sol.x, lift(sol.partition, sol.xi))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_matches_baseline_and_is_stationary(seed):
    rng = np.random.default_rng(seed)
    spec = feasible_instance(rng, n=int(rng.integers(2, 10)))
    sol = cut_pursuit(spec, TIGHT)
    with warnings.catch_warnings():
        # the baseline may stall short of its tolerance; it only bounds the objective
        warnings.simplefilter("ignore", ConvergenceWarning)
        ref = baseline_solve(spec, tol=1e-10, max_iter=100_000, checkpoint=0)
    f_ref = objective(spec, ref.x)
    assert sol.objective <= f_ref + 1e-5 * (1 + abs(f_ref))
    objs = sol.trace.objectives
    assert np.all(objs[1:] <= objs[:-1] + 1e-6 * (1 + np.abs(objs[:-1])))
    if sol.trace.stop_reason == "stationary":
        _, best = exhaustive_direction_oracle(spec, sol.x, (-1, 0, 1), eps_eq=1e-9)
        assert best >= -1e-6


@pytest.mark.parametrize("direction", ["two_cuts", "two_stage"])
def test_direction_solvers_agree(direction):
    spec = fused2d(8, 8, seed=1).spec()
    sol = cut_pursuit(spec, SolveOptions(direction=direction))
    ref = cut_pursuit(spec)
    assert sol.objective == pytest.approx(ref.objective, rel=1e-8)


def test_no_merging_grows_partition():
    spec = eeg_like(sources=30, sensors=6, seed=2).spec()
    sol = cut_pursuit(spec, SolveOptions(merge_eps=0.0, tol_x=0.0, reduced_tol_factor=1e-6, reduced_max_iter=200_000))
    counts = sol.trace.component_counts
    assert np.all(np.diff(counts) > 0)
    assert sol.iterations <= spec.vertex_count


def test_trace_csv():
    sol = cut_pursuit(fused1d(6).spec())
    lines = sol.trace.to_csv().splitlines()
    assert lines[0] == ",".join(TRACE_HEADER)
    assert len(lines) == sol.iterations + 1
    assert lines[-1].endswith(sol.trace.stop_reason)


def test_options_validation():
    with pytest.raises(ValueError):
        SolveOptions(tol_x=-1)
    with pytest.raises(ValueError):
        SolveOptions(merge_eps=-1)
    with pytest.raises(ValueError):
        SolveOptions(max_iter=0)
    with pytest.raises(ValueError):
        SolveOptions(direction="nope")


def test_max_iter_stop():
    sol = cut_pursuit(fused2d(8, 8, seed=0).spec(), SolveOptions(max_iter=1))
    assert sol.iterations == 1
    assert sol.trace.stop_reason in ("max_iter", "stationary")


def test_disjoint_domains_need_initial_partition():
    g = chain_graph(2)
    ns = Separable.from_arrays([0.0, 0.0], [0.0, 2.0], [1.0, 3.0])
    spec = ProblemSpec(g, QuadraticFidelity(np.array([0.0, 5.0])), ns)
    with pytest.raises(InfeasibleError):
        cut_pursuit(spec)
    sol = cut_pursuit(spec, SolveOptions(initial_partition=Partition.singletons(2)))
    # 0.5 x0^2 + 0.5 (x1 - 5)^2 + (x1 - x0) on [0, 1] x [2, 3]
    assert sol.x == pytest.approx([1.0, 3.0], abs=1e-6)


def test_empty_graph_rejected():
    spec = ProblemSpec(WeightedGraph(0, []), QuadraticFidelity(np.zeros(0)), Separable([]))
    with pytest.raises(ValueError):
        cut_pursuit(spec)


def test_disconnected_graph():
    g = WeightedGraph(4, [(0, 1, 1.0), (2, 3, 1.0)])
    spec = ProblemSpec(g, QuadraticFidelity(np.array([0.0, 0.0, 3.0, 3.0])), Separable.from_arrays(np.zeros(4), -np.inf, np.inf))
    sol = cut_pursuit(spec)
    assert sol.x == pytest.approx([0, 0, 3, 3], abs=1e-6)
