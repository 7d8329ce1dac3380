"""Oracles for the objective ``f(x) + sum_v g_v(x_v) + sum_e w_e |x_u - x_v|``.

Extended reals are plain Python/numpy floats with ``inf``; the only
arithmetic rule that needs enforcing is that ``inf + (-inf)`` is an error,
see :func:`ext_add`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .graph import Partition, WeightedGraph

__all__ = [
    "ext_add",
    "NonsmoothTerm",
    "AbsBoxTerm",
    "Zero",
    "WeightedAbs",
    "NonnegIndicator",
    "WeightedAbsPlusNonneg",
    "BoxIndicator",
    "ScalarTerm",
    "SumTerm",
    "aggregate_prox",
    "Separable",
    "SmoothTerm",
    "ZeroSmooth",
    "QuadraticFidelity",
    "SmoothFunction",
    "ProblemSpec",
    "VertexDeltas",
    "InfeasibleError",
    "objective",
    "snap_nonsmooth",
    "equal_edges",
    "vertex_deltas",
    "dir_deriv",
    "dir_deriv_from_deltas",
]

INF = math.inf


class InfeasibleError(ValueError):
    """Raised when a point or a reduced problem has an empty domain."""


def ext_add(*terms: float) -> float:
    """Sum of extended reals; ``+inf`` and ``-inf`` together is a contract violation."""
    has_pos = any(t == INF for t in terms)
    has_neg = any(t == -INF for t in terms)
    if has_pos and has_neg:
        raise ArithmeticError("undefined extended-real sum (+inf) + (-inf)")
    if has_pos:
        return INF
    if has_neg:
        return -INF
    return float(math.fsum(terms))


# ---------------------------------------------------------------------------
# scalar nonsmooth terms


class NonsmoothTerm:
    """Scalar term ``g: R -> ]-inf, +inf]`` given by its oracle table.

    Subclasses provide ``value``, ``dd_plus`` (``g'(t, +1)``), ``dd_minus``
    (``g'(t, -1)``), ``prox``, ``kinks`` and the closed ``domain`` interval.
    """

    domain: tuple[float, float] = (-INF, INF)

    def value(self, t: float) -> float:
        raise NotImplementedError

    def dd_plus(self, t: float) -> float:
        raise NotImplementedError

    def dd_minus(self, t: float) -> float:
        raise NotImplementedError

    def kinks(self) -> tuple[float, ...]:
        return ()

    def prox(self, t: float, step: float) -> float:
        return aggregate_prox(t, step, [self])


class AbsBoxTerm(NonsmoothTerm):
    """``lam * |t| + indicator of [lower, upper]``.

    Every built-in scalar term is of this form, which makes sums over a
    component (same argument) closed-form: weights add, intervals intersect.
    """

    def __init__(self, lam: float = 0.0, lower: float = -INF, upper: float = INF):
        if lam < 0:
            raise ValueError("lam must be nonnegative")
        if lower > upper:
            raise InfeasibleError(f"empty interval [{lower}, {upper}]")
        self.lam = float(lam)
        self.lower = float(lower)
        self.upper = float(upper)
        self.domain = (self.lower, self.upper)

    def value(self, t):
        if t < self.lower or t > self.upper:
            return INF
        return self.lam * abs(t)

    def dd_plus(self, t):
        if t >= self.upper:
            return INF
        return -self.lam if t < 0 else self.lam

    def dd_minus(self, t):
        if t <= self.lower:
            return INF
        return -self.lam if t > 0 else self.lam

    def kinks(self):
        pts = [p for p in (self.lower, self.upper) if math.isfinite(p)]
        if self.lam > 0 and self.lower < 0 < self.upper:
            pts.append(0.0)
        return tuple(sorted(set(pts)))

    def prox(self, t, step):
        s = math.copysign(max(abs(t) - step * self.lam, 0.0), t)
        return min(max(s, self.lower), self.upper)

    def __repr__(self):
        return f"{type(self).__name__}(lam={self.lam}, lower={self.lower}, upper={self.upper})"


class Zero(AbsBoxTerm):
    def __init__(self):
        super().__init__()

    def __repr__(self):
        return "Zero()"


class WeightedAbs(AbsBoxTerm):
    def __init__(self, lam: float):
        super().__init__(lam)

    def __repr__(self):
        return f"WeightedAbs({self.lam})"


class NonnegIndicator(AbsBoxTerm):
    def __init__(self):
        super().__init__(0.0, 0.0, INF)

    def __repr__(self):
        return "NonnegIndicator()"


class WeightedAbsPlusNonneg(AbsBoxTerm):
    """Sparsity plus positivity: ``lam * |t| + indicator(t >= 0)``."""

    def __init__(self, lam: float):
        super().__init__(lam, 0.0, INF)

    def __repr__(self):
        return f"WeightedAbsPlusNonneg({self.lam})"


class BoxIndicator(AbsBoxTerm):
    def __init__(self, lower: float, upper: float):
        super().__init__(0.0, lower, upper)

    def __repr__(self):
        return f"BoxIndicator({self.lower}, {self.upper})"


class ScalarTerm(NonsmoothTerm):
    """User-supplied term from callables.

    ``prox`` is optional; without it the generic bisection of
    :func:`aggregate_prox` is used, which assumes convexity.
    """

    def __init__(
        self,
        value: Callable[[float], float],
        dd_plus: Callable[[float], float],
        dd_minus: Callable[[float], float],
        domain: tuple[float, float] = (-INF, INF),
        kinks: Sequence[float] = (),
        prox: Callable[[float, float], float] | None = None,
    ):
        self._value = value
        self._dd_plus = dd_plus
        self._dd_minus = dd_minus
        self.domain = (float(domain[0]), float(domain[1]))
        self._kinks = tuple(float(k) for k in kinks)
        self._prox = prox

    def value(self, t):
        if t < self.domain[0] or t > self.domain[1]:
            return INF
        return float(self._value(t))

    def dd_plus(self, t):
        return float(self._dd_plus(t))

    def dd_minus(self, t):
        return float(self._dd_minus(t))

    def kinks(self):
        return self._kinks

    def prox(self, t, step):
        if self._prox is not None:
            return float(self._prox(t, step))
        return aggregate_prox(t, step, [self])


class SumTerm(NonsmoothTerm):
    """Sum of scalar terms evaluated at a shared argument."""

    def __init__(self, members: Sequence[NonsmoothTerm]):
        self.members = list(members)
        lo = max((m.domain[0] for m in self.members), default=-INF)
        hi = min((m.domain[1] for m in self.members), default=INF)
        self.domain = (lo, hi)

    def value(self, t):
        return ext_add(*(m.value(t) for m in self.members))

    def dd_plus(self, t):
        return ext_add(*(m.dd_plus(t) for m in self.members))

    def dd_minus(self, t):
        return ext_add(*(m.dd_minus(t) for m in self.members))

    def kinks(self):
        return tuple(sorted({k for m in self.members for k in m.kinks()}))

    def prox(self, t, step):
        return aggregate_prox(t, step, self.members)


def aggregate_prox(t: float, step: float, members: Sequence[NonsmoothTerm], tol: float = 1e-12) -> float:
    """Proximity operator of ``sum(members)`` at ``t``.

    Closed form when every member is an :class:`AbsBoxTerm`; otherwise
    bisection on the one-sided optimality conditions
    ``-G'(s, -1) + (s - t) / step <= 0 <= G'(s, +1) + (s - t) / step``.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    if all(isinstance(m, AbsBoxTerm) for m in members):
        lam = sum(m.lam for m in members)
        lo = max((m.lower for m in members), default=-INF)
        hi = min((m.upper for m in members), default=INF)
        if lo > hi:
            raise InfeasibleError("members have disjoint domains")
        return AbsBoxTerm(lam, lo, hi).prox(t, step)

    lo = max((m.domain[0] for m in members), default=-INF)
    hi = min((m.domain[1] for m in members), default=INF)
    if lo > hi:
        raise InfeasibleError("members have disjoint domains")

    def right(s):
        return ext_add(*(m.dd_plus(s) for m in members)) + (s - t) / step

    def left(s):
        return -ext_add(*(m.dd_minus(s) for m in members)) + (s - t) / step

    if math.isfinite(lo) and right(lo) >= 0:
        return lo
    if math.isfinite(hi) and left(hi) <= 0:
        return hi
    radius = 1.0 + abs(t)
    a = max(lo, t - radius)
    while right(a) >= 0:
        radius *= 2
        a = max(lo, t - radius)
    b = min(hi, t + radius)
    while left(b) <= 0:
        radius *= 2
        b = min(hi, t + radius)
    while b - a > tol * (1.0 + abs(a) + abs(b)):
        mid = 0.5 * (a + b)
        if right(mid) < 0:
            a = mid
        elif left(mid) > 0:
            b = mid
        else:
            return mid
    return 0.5 * (a + b)


# ---------------------------------------------------------------------------
# vectorized separable sum


class Separable:
    """Per-vertex family of scalar terms, vectorized where possible.

    When every term is an :class:`AbsBoxTerm` the family is stored as three
    arrays (``lam``, ``lower``, ``upper``) and all oracles are numpy
    expressions; otherwise calls loop over the term objects.
    """

    def __init__(self, terms: Sequence[NonsmoothTerm]):
        self.terms = list(terms)
        self.size = len(self.terms)
        self.boxed = all(isinstance(t, AbsBoxTerm) for t in self.terms)
        if self.boxed:
            self.lam = np.array([t.lam for t in self.terms], dtype=float)
            self.lower = np.array([t.lower for t in self.terms], dtype=float)
            self.upper = np.array([t.upper for t in self.terms], dtype=float)

    @classmethod
    def from_arrays(cls, lam, lower, upper) -> "Separable":
        lam, lower, upper = np.broadcast_arrays(
            np.asarray(lam, float), np.asarray(lower, float), np.asarray(upper, float)
        )
        if np.any(lower > upper):
            raise InfeasibleError("empty domain for some vertex")
        obj = cls.__new__(cls)
        obj.size = len(lam)
        obj.boxed = True
        obj.lam, obj.lower, obj.upper = lam.copy(), lower.copy(), upper.copy()
        obj._terms = None
        return obj

    @property
    def terms(self) -> list[NonsmoothTerm]:
        if self._terms is None:
            self._terms = [AbsBoxTerm(*p) for p in zip(self.lam, self.lower, self.upper)]
        return self._terms

    @terms.setter
    def terms(self, value):
        self._terms = value

    @classmethod
    def uniform(cls, term: NonsmoothTerm, n: int) -> "Separable":
        if isinstance(term, AbsBoxTerm):
            return cls.from_arrays(np.full(n, term.lam), term.lower, term.upper)
        return cls([term] * n)

    def value(self, x: np.ndarray) -> float:
        if self.boxed:
            if np.any(x < self.lower) or np.any(x > self.upper):
                return INF
            return float(self.lam @ np.abs(x))
        return ext_add(*(g.value(float(t)) for g, t in zip(self.terms, x)))

    def in_domain(self, x: np.ndarray) -> bool:
        if self.boxed:
            return bool(np.all(x >= self.lower) and np.all(x <= self.upper))
        return all(g.domain[0] <= t <= g.domain[1] for g, t in zip(self.terms, x))

    def dd_plus(self, x: np.ndarray) -> np.ndarray:
        if self.boxed:
            out = np.where(x < 0, -self.lam, self.lam)
            return np.where(x >= self.upper, INF, out)
        return np.array([g.dd_plus(float(t)) for g, t in zip(self.terms, x)])

    def dd_minus(self, x: np.ndarray) -> np.ndarray:
        if self.boxed:
            out = np.where(x > 0, -self.lam, self.lam)
            return np.where(x <= self.lower, INF, out)
        return np.array([g.dd_minus(float(t)) for g, t in zip(self.terms, x)])

    def snap(self, x: np.ndarray, eps: float) -> np.ndarray:
        x = np.array(x, dtype=float)
        if eps <= 0:
            return x
        if self.boxed:
            zero = (self.lam > 0) & (np.abs(x) <= eps)
            x[zero] = 0.0
            for bound in (self.lower, self.upper):
                hit = np.isfinite(bound) & (np.abs(x - bound) <= eps)
                x[hit] = bound[hit]
            return x
        for i, g in enumerate(self.terms):
            for k in g.kinks():
                if abs(x[i] - k) <= eps:
                    x[i] = k
                    break
        return x

    def prox(self, t: np.ndarray, step) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.boxed:
            s = np.abs(t)
            s -= step * self.lam
            np.maximum(s, 0.0, out=s)
            s *= np.sign(t)
            np.maximum(s, self.lower, out=s)
            return np.minimum(s, self.upper, out=s)
        step = np.broadcast_to(np.asarray(step, dtype=float), t.shape)
        return np.array([g.prox(float(a), float(b)) for g, a, b in zip(self.terms, t, step)])

    def project(self, t: np.ndarray) -> np.ndarray:
        """Closest point of the domain, coordinate-wise."""
        if self.boxed:
            return np.clip(t, self.lower, self.upper)
        return np.array([min(max(a, g.domain[0]), g.domain[1]) for g, a in zip(self.terms, t)])

    def aggregate(self, partition: Partition) -> "Separable":
        """Component-wise sums ``gamma_U(s) = sum_{v in U} g_v(s)``."""
        if self.boxed:
            n = len(partition)
            lam = np.bincount(partition.labels, weights=self.lam, minlength=n)
            lower = np.full(n, -INF)
            upper = np.full(n, INF)
            np.maximum.at(lower, partition.labels, self.lower)
            np.minimum.at(upper, partition.labels, self.upper)
            bad = lower > upper
            if np.any(bad):
                raise InfeasibleError(
                    f"{int(bad.sum())} component(s) have an empty intersection of vertex domains"
                )
            return Separable.from_arrays(lam, lower, upper)
        terms = [SumTerm([self.terms[v] for v in comp]) for comp in partition.components]
        for i, term in enumerate(terms):
            if term.domain[0] > term.domain[1]:
                raise InfeasibleError(f"component {i} has an empty intersection of vertex domains")
        return Separable(terms)

    def kink_points(self) -> list[tuple[float, ...]]:
        return [g.kinks() for g in self.terms]


# ---------------------------------------------------------------------------
# smooth terms


class SmoothTerm:
    """Differentiable term ``f``: ``value``, ``gradient`` and a curvature bound.

    ``curvature(partition)`` returns, per component, an upper bound on the
    row sums of absolute values of the Hessian of ``xi -> f(lift(xi))``;
    the diagonal matrix it defines dominates that Hessian.
    """

    def value(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def gradient(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def curvature(self, partition: Partition) -> np.ndarray:
        raise NotImplementedError


class ZeroSmooth(SmoothTerm):
    def value(self, x):
        return 0.0

    def gradient(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def curvature(self, partition):
        return np.zeros(len(partition))


class QuadraticFidelity(SmoothTerm):
    """``0.5 * ||y - phi @ x||^2``; ``phi=None`` stands for the identity."""

    def __init__(self, y, phi=None):
        self.y = np.asarray(y, dtype=float)
        if phi is not None and not sp.issparse(phi):
            phi = np.asarray(phi, dtype=float)
        self.phi = phi
        if phi is not None and phi.shape[0] != len(self.y):
            raise ValueError(f"phi has {phi.shape[0]} rows but y has {len(self.y)} entries")

    @property
    def n_vars(self) -> int:
        return len(self.y) if self.phi is None else self.phi.shape[1]

    def residual(self, x):
        if self.phi is None:
            return x - self.y
        return self.phi @ x - self.y

    def value(self, x):
        r = self.residual(np.asarray(x, dtype=float))
        return 0.5 * float(r @ r)

    def gradient(self, x):
        r = self.residual(np.asarray(x, dtype=float))
        if self.phi is None:
            return r
        return np.asarray(self.phi.T @ r).ravel()

    def curvature(self, partition):
        if self.phi is None:
            return partition.sizes
        n = len(partition.labels)
        lift = sp.csr_matrix((np.ones(n), (np.arange(n), partition.labels)), shape=(n, len(partition)))
        m = self.phi @ lift
        gram = m.T @ m
        gram = abs(gram) if sp.issparse(gram) else np.abs(gram)
        # weighted row sums with weights diag^(-1/2) majorize the Hessian and
        # do not penalize small components coupled to large ones
        diag = np.asarray(gram.diagonal(), dtype=float).ravel()
        root = np.sqrt(diag)
        scale = np.where(root > 0, 1.0 / np.where(root > 0, root, 1.0), 0.0)
        return root * np.asarray(gram @ scale).ravel()


class SmoothFunction(SmoothTerm):
    """Wraps user callables; ``lipschitz`` bounds the Hessian spectral norm."""

    def __init__(self, value, gradient, lipschitz: float):
        self._value = value
        self._gradient = gradient
        self.lipschitz = float(lipschitz)

    def value(self, x):
        return float(self._value(x))

    def gradient(self, x):
        return np.asarray(self._gradient(x), dtype=float)

    def curvature(self, partition):
        # lift^T H lift <= L * lift^T lift = L * diag(sizes)
        return self.lipschitz * partition.sizes


# ---------------------------------------------------------------------------
# problem and derivative computations


@dataclass(frozen=True)
class ProblemSpec:
    """Scalar instance: graph (its weights are the TV weights), ``f`` and ``g_v``.

    Initializing cut-pursuit with the whole vertex set requires the
    intersection of the domains of all ``g_v`` to be nonempty.
    """

    graph: WeightedGraph
    smooth: SmoothTerm
    nonsmooth: Separable

    def __post_init__(self):
        ns = self.nonsmooth
        if isinstance(ns, NonsmoothTerm):
            ns = Separable.uniform(ns, self.graph.vertex_count)
        elif not isinstance(ns, Separable):
            ns = Separable(list(ns))
        object.__setattr__(self, "nonsmooth", ns)
        if ns.size != self.graph.vertex_count:
            raise ValueError(
                f"{ns.size} nonsmooth terms for {self.graph.vertex_count} vertices"
            )
        n_vars = getattr(self.smooth, "n_vars", None)
        if n_vars is not None and n_vars != self.graph.vertex_count:
            raise ValueError(f"smooth term acts on {n_vars} variables, graph has {self.graph.vertex_count}")

    @property
    def vertex_count(self) -> int:
        return self.graph.vertex_count


@dataclass(frozen=True)
class VertexDeltas:
    """Per-vertex slopes ``delta_plus`` in ]-inf, inf] and ``delta_minus`` in [-inf, inf[."""

    delta_plus: np.ndarray
    delta_minus: np.ndarray

    def __post_init__(self):
        if np.any(self.delta_minus == INF) or np.any(self.delta_plus == -INF):
            raise ArithmeticError("invalid vertex slopes: delta_minus = +inf or delta_plus = -inf")

    @property
    def offsets(self) -> np.ndarray:
        """``m_v = max(0, delta_minus, -delta_plus)``, always finite."""
        return np.maximum(0.0, np.maximum(self.delta_minus, -self.delta_plus))


def objective(spec: ProblemSpec, x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    g = spec.nonsmooth.value(x)
    if g == INF:
        return INF
    return spec.smooth.value(x) + g + spec.graph.total_variation(x)


def snap_nonsmooth(spec: ProblemSpec, x: np.ndarray, eps_snap: float) -> np.ndarray:
    """Move coordinates lying within ``eps_snap`` of a kink of their term onto it."""
    return spec.nonsmooth.snap(np.asarray(x, dtype=float), eps_snap)


def equal_edges(graph: WeightedGraph, x: np.ndarray, eps_eq: float) -> np.ndarray:
    """Mask of edges whose endpoint values agree within ``eps_eq``."""
    diff = np.abs(x[graph.u] - x[graph.v])
    if diff.ndim > 1:
        diff = diff.max(axis=1)
    return diff <= eps_eq


def _tv_slopes(graph: WeightedGraph, x: np.ndarray, equal: np.ndarray) -> np.ndarray:
    s = np.sign(x[graph.u] - x[graph.v]) * graph.w
    s[equal] = 0.0
    n = graph.vertex_count
    return np.bincount(graph.u, weights=s, minlength=n) - np.bincount(graph.v, weights=s, minlength=n)


def vertex_deltas(spec: ProblemSpec, x: np.ndarray, eps_eq: float = 0.0) -> VertexDeltas:
    x = np.asarray(x, dtype=float)
    if not spec.nonsmooth.in_domain(x):
        raise InfeasibleError("point not in domain")
    equal = equal_edges(spec.graph, x, eps_eq)
    common = spec.smooth.gradient(x) + _tv_slopes(spec.graph, x, equal)
    return VertexDeltas(
        delta_plus=common + spec.nonsmooth.dd_plus(x),
        delta_minus=common - spec.nonsmooth.dd_minus(x),
    )


def dir_deriv_from_deltas(
    deltas: VertexDeltas, graph: WeightedGraph, equal: np.ndarray, d: np.ndarray
) -> float:
    """Directional derivative from precomputed slopes; ``0 * inf`` counts as 0."""
    d = np.asarray(d, dtype=float)
    pos, neg = d > 0, d < 0
    unary = ext_add(
        float(np.sum(deltas.delta_plus[pos] * d[pos])),
        float(np.sum(deltas.delta_minus[neg] * d[neg])),
    )
    pair = float(graph.w[equal] @ np.abs(d[graph.u[equal]] - d[graph.v[equal]]))
    return ext_add(unary, pair)


def dir_deriv(spec: ProblemSpec, x: np.ndarray, d: np.ndarray, eps_eq: float = 0.0) -> float:
    x = np.asarray(x, dtype=float)
    deltas = vertex_deltas(spec, x, eps_eq)
    return dir_deriv_from_deltas(deltas, spec.graph, equal_edges(spec.graph, x, eps_eq), d)
