import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _instances import fd_dir_deriv, random_instance
from cutpursuit.functional import (
    AbsBoxTerm,
    BoxIndicator,
    InfeasibleError,
    NonnegIndicator,
    ProblemSpec,
    QuadraticFidelity,
    ScalarTerm,
    Separable,
    SmoothFunction,
    SumTerm,
    VertexDeltas,
    WeightedAbs,
    WeightedAbsPlusNonneg,
    Zero,
    aggregate_prox,
    dir_deriv,
    equal_edges,
    ext_add,
    objective,
    snap_nonsmooth,
    vertex_deltas,
)
from cutpursuit.graph import Partition, chain_graph

BUILTINS = [Zero(), WeightedAbs(0.7), NonnegIndicator(), BoxIndicator(-1.0, 2.0), WeightedAbsPlusNonneg(1.3)]


def test_ext_add():
    assert ext_add(1.0, 2.0) == 3.0
    assert ext_add(1.0, math.inf) == math.inf
    assert ext_add(-math.inf, 3.0) == -math.inf
    with pytest.raises(ArithmeticError):
        ext_add(math.inf, -math.inf)


@pytest.mark.parametrize("term", BUILTINS, ids=lambda t: type(t).__name__)
def test_scalar_one_sided_derivatives(term):
    for t in np.linspace(-2.5, 2.5, 41):
        if term.value(t) == math.inf:
            continue
        for sign, dd in ((1, term.dd_plus(t)), (-1, term.dd_minus(t))):
            q = (term.value(t + sign * 1e-7) - term.value(t)) / 1e-7
            if math.isinf(dd):
                assert q == math.inf
            else:
                assert dd == pytest.approx(q, rel=1e-4, abs=1e-6)


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(BUILTINS), st.floats(-4, 4), st.floats(0.05, 3))
def test_scalar_prox_beats_scan(term, t, step):
    p = term.prox(t, step)
    lo, hi = max(term.lower, t - 6), min(term.upper, t + 6)
    grid = np.linspace(lo, hi, 4001)
    scan = min(term.value(s) + (s - t) ** 2 / (2 * step) for s in grid)
    assert term.value(p) + (p - t) ** 2 / (2 * step) <= scan + 1e-10


def test_generic_scalar_term_prox_matches_closed_form():
    # |t| written through callables, so prox goes through bisection
    generic = ScalarTerm(abs, lambda t: 1.0 if t >= 0 else -1.0, lambda t: 1.0 if t <= 0 else -1.0, kinks=(0.0,))
    closed = WeightedAbs(1.0)
    for t in np.linspace(-3, 3, 13):
        assert generic.prox(t, 0.7) == pytest.approx(closed.prox(t, 0.7), abs=1e-9)


def test_aggregate_prox_sums_members():
    members = [WeightedAbs(0.5), WeightedAbsPlusNonneg(0.25), BoxIndicator(-1, 1)]
    # shared argument: 0.75|s| on [0, 1]
    assert aggregate_prox(2.0, 1.0, members) == pytest.approx(1.0)
    assert aggregate_prox(0.5, 1.0, members) == pytest.approx(0.0)
    mixed = members + [ScalarTerm(lambda s: 0.0, lambda s: 0.0, lambda s: 0.0)]
    assert aggregate_prox(1.5, 1.0, mixed) == pytest.approx(0.75, abs=1e-9)
    with pytest.raises(InfeasibleError):
        aggregate_prox(0.0, 1.0, [BoxIndicator(0, 1), BoxIndicator(2, 3)])


def test_sum_term_values():
    s = SumTerm([WeightedAbs(1.0), NonnegIndicator()])
    assert s.value(-1.0) == math.inf
    assert s.value(2.0) == 2.0
    assert s.dd_plus(0.0) == 1.0
    assert s.dd_minus(0.0) == math.inf


def test_separable_vectorized_matches_objects():
    terms = [AbsBoxTerm(0.5, -1, 3), AbsBoxTerm(0.0, 0, math.inf), AbsBoxTerm(1.2, -math.inf, math.inf)]
    fast = Separable.from_arrays([t.lam for t in terms], [t.lower for t in terms], [t.upper for t in terms])
    slow = Separable(terms + [ScalarTerm(lambda s: 0.0, lambda s: 0.0, lambda s: 0.0)])
    x = np.array([-1.0, 0.0, 0.3])
    for name in ("dd_plus", "dd_minus"):
        assert np.array_equal(getattr(fast, name)(x), getattr(slow, name)(np.append(x, 0))[:3])
    assert fast.value(x) == pytest.approx(slow.value(np.append(x, 0)))
    t = np.array([4.0, -2.0, 0.5])
    assert fast.prox(t, 0.5) == pytest.approx(slow.prox(np.append(t, 0), 0.5)[:3])
    with pytest.raises(InfeasibleError):
        Separable.from_arrays([0.0], [1.0], [0.0])
    with pytest.raises(InfeasibleError):
        Separable.from_arrays([0.0, 0.0], [0.0, 2.0], [1.0, 3.0]).aggregate(Partition.whole(2))


def test_quadratic_gradient_and_curvature():
    rng = np.random.default_rng(0)
    phi = rng.standard_normal((5, 7))
    f = QuadraticFidelity(rng.standard_normal(5), phi)
    x = rng.standard_normal(7)
    h = 1e-6
    fd = np.array([(f.value(x + h * e) - f.value(x - h * e)) / (2 * h) for e in np.eye(7)])
    g = f.gradient(x)
    assert np.all(np.abs(g - fd) <= 1e-6 * (1 + np.abs(g)))
    part = Partition(np.array([0, 0, 1, 1, 1, 2, 3]))
    lift = np.eye(4)[part.labels]
    hess = lift.T @ phi.T @ phi @ lift
    # diag(curvature) - H is positive semidefinite
    assert np.linalg.eigvalsh(np.diag(f.curvature(part)) - hess).min() >= -1e-9
    with pytest.raises(ValueError):
        QuadraticFidelity(np.zeros(3), np.zeros((4, 2)))


def test_smooth_function_wrapper():
    f = SmoothFunction(lambda x: float(x @ x), lambda x: 2 * x, lipschitz=2.0)
    assert f.value(np.ones(3)) == 3.0
    assert f.curvature(Partition(np.array([0, 0, 1]))).tolist() == [4.0, 2.0]


def test_problem_spec_checks_sizes():
    g = chain_graph(3)
    with pytest.raises(ValueError):
        ProblemSpec(g, QuadraticFidelity(np.zeros(4)), Separable([Zero()] * 3))
    with pytest.raises(ValueError):
        ProblemSpec(g, QuadraticFidelity(np.zeros(3)), Separable([Zero()] * 2))
    spec = ProblemSpec(g, QuadraticFidelity(np.zeros(3)), WeightedAbs(1.0))
    assert spec.nonsmooth.size == 3


def test_deltas_and_offsets():
    spec = ProblemSpec(chain_graph(3), QuadraticFidelity(np.array([1.0, 0.0, 0.0])), WeightedAbsPlusNonneg(0.5))
    x = np.array([0.0, 0.0, 1.0])
    dl = vertex_deltas(spec, x)
    # vertex 0: gradient -1, kink of |.| and bound at 0
    assert dl.delta_plus[0] == pytest.approx(-0.5)
    assert dl.delta_minus[0] == -math.inf
    # vertex 1 sees edge (1, 2) as unequal: slope -1
    assert dl.delta_plus[1] == pytest.approx(0.5 - 1.0)
    assert np.all(np.isfinite(dl.offsets))
    with pytest.raises(InfeasibleError):
        vertex_deltas(spec, np.array([-1.0, 0.0, 0.0]))
    with pytest.raises(ArithmeticError):
        VertexDeltas(np.array([-math.inf]), np.array([0.0]))


def test_snap_and_equal_edges():
    spec = ProblemSpec(chain_graph(3), QuadraticFidelity(np.zeros(3)), BoxIndicator(-1, 1))
    x = snap_nonsmooth(spec, np.array([0.9999999, 1e-9, -0.5]), 1e-6)
    assert x.tolist() == [1.0, 1e-9, -0.5]
    assert equal_edges(spec.graph, np.array([0.0, 1e-9, 1.0]), 1e-8).tolist() == [True, False]


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_dir_deriv_properties(seed):
    rng = np.random.default_rng(seed)
    spec, x = random_instance(rng)
    d = rng.standard_normal(spec.vertex_count)
    whole = dir_deriv(spec, x, d)
    neg, pos = dir_deriv(spec, x, np.minimum(d, 0)), dir_deriv(spec, x, np.maximum(d, 0))
    if math.isfinite(neg) and math.isfinite(pos):
        assert whole == pytest.approx(neg + pos, abs=1e-9)
    else:
        assert whole == math.inf
    assert dir_deriv(spec, x, np.zeros_like(d)) == 0.0
    for lam in (0.5, 2.0, 10.0):
        got = dir_deriv(spec, x, lam * d)
        assert got == whole if math.isinf(whole) else got == pytest.approx(lam * whole, rel=1e-9, abs=1e-9)
    # objective-based quotient agrees with the slope formula
    fd = fd_dir_deriv(spec, x, d)
    if math.isinf(whole):
        assert fd == math.inf
    else:
        assert fd == pytest.approx(whole, rel=1e-5, abs=1e-5)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_dir_deriv_sum_rule(seed):
    rng = np.random.default_rng(seed)
    spec, x = random_instance(rng)
    d = rng.standard_normal(spec.vertex_count)
    if not math.isfinite(dir_deriv(spec, x, d)):
        return
    smooth = float(spec.smooth.gradient(x) @ d)
    terms = sum(
        (t.dd_plus(a) * b if b > 0 else -t.dd_minus(a) * b if b < 0 else 0.0)
        for t, a, b in zip(spec.nonsmooth.terms, x, d)
    )
    g = spec.graph
    diff = x[g.u] - x[g.v]
    dd = d[g.u] - d[g.v]
    tv = float(np.sum(g.w * np.where(diff == 0, np.abs(dd), np.sign(diff) * dd)))
    assert dir_deriv(spec, x, d) == pytest.approx(smooth + terms + tv, abs=1e-9)


def test_objective_infinite_outside_domain():
    spec = ProblemSpec(chain_graph(2), QuadraticFidelity(np.zeros(2)), NonnegIndicator())
    assert objective(spec, np.array([-1.0, 0.0])) == math.inf
    assert objective(spec, np.array([1.0, 0.0])) == pytest.approx(1.5)
