"""Deterministic synthetic instances.

Every generator takes a ``seed`` and returns an :class:`Instance`, which
can be turned into a problem object or written as a problem directory
(``problem.json`` plus CSV data files, and ``truth.csv`` when a ground
truth exists).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .functional import ProblemSpec, QuadraticFidelity, Separable
from .graph import WeightedGraph, chain_graph, grid_graph
from .io import write_edge_list, write_matrix, write_problem, write_vector
from .multidim import KLFidelity, MultiProblemSpec

__all__ = ["Instance", "fused1d", "fused2d", "eeg_like", "multilabel_grid", "GENERATORS", "dice_score"]


@dataclass
class Instance:
    graph: WeightedGraph
    y: np.ndarray | None = None
    phi: np.ndarray | None = None
    lam: np.ndarray | None = None
    nonneg: bool = False
    q: np.ndarray | None = None
    beta: float | None = None
    truth: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def vertex_count(self) -> int:
        return self.graph.vertex_count

    def spec(self) -> ProblemSpec | MultiProblemSpec:
        n = self.vertex_count
        if self.q is not None:
            return MultiProblemSpec(self.graph, KLFidelity(self.q, self.beta))
        lam = np.zeros(n) if self.lam is None else self.lam
        lower = 0.0 if self.nonneg else -np.inf
        return ProblemSpec(
            self.graph, QuadraticFidelity(self.y, self.phi), Separable.from_arrays(lam, lower, np.inf)
        )

    def write(self, out_dir) -> Path:
        """Write the instance files; returns the path of ``problem.json``."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_edge_list(out / "edges.csv", self.graph)
        doc = {"vertex_count": self.vertex_count, "graph": "edges.csv", "tv_scale": 1.0}
        if self.q is not None:
            write_matrix(out / "q.csv", self.q)
            doc["multidim"] = {"K": int(self.q.shape[1]), "q": "q.csv", "beta": self.beta}
        else:
            write_vector(out / "y.csv", self.y)
            doc["smooth"] = {"kind": "quadratic", "y": "y.csv"}
            if self.phi is not None:
                write_matrix(out / "phi.csv", self.phi)
                doc["smooth"]["phi"] = {"path": "phi.csv", "format": "dense"}
            if self.lam is not None and np.any(self.lam > 0):
                write_vector(out / "lam.csv", self.lam)
                doc["nonsmooth"] = {"kind": "abs_nonneg" if self.nonneg else "abs", "lam": "lam.csv"}
            else:
                doc["nonsmooth"] = {"kind": "nonneg" if self.nonneg else "zero"}
        if self.truth is not None:
            write_vector(out / "truth.csv", self.truth)
        problem = out / "problem.json"
        write_problem(problem, doc)
        return problem


def fused1d(size: int = 6, noise: float = 0.0, seed: int = 0, jump: float = 5.0, weight: float = 1.0) -> Instance:
    """Chain with a single step from 0 to ``jump`` halfway, plus Gaussian noise."""
    if size < 1:
        raise ValueError("size must be positive")
    rng = np.random.default_rng(seed)
    truth = np.where(np.arange(size) >= size // 2, jump, 0.0)
    y = truth + noise * rng.standard_normal(size)
    return Instance(chain_graph(size, weight), y=y, truth=truth)


def fused2d(rows: int = 16, cols: int = 16, noise: float = 0.5, seed: int = 0, weight: float = 1.0) -> Instance:
    """Grid image: a bright rectangle on a dark background, plus Gaussian noise."""
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be positive")
    rng = np.random.default_rng(seed)
    img = np.zeros((rows, cols))
    img[rows // 4 : (3 * rows) // 4, cols // 4 : (3 * cols) // 4] = 5.0
    truth = img.ravel()
    y = truth + noise * rng.standard_normal(truth.size)
    return Instance(grid_graph(rows, cols, weight), y=y, truth=truth)


def mesh_points(n: int) -> np.ndarray:
    """Fibonacci points on the unit sphere."""
    i = np.arange(n) + 0.5
    polar = np.arccos(1 - 2 * i / n)
    theta = np.pi * (1 + 5**0.5) * i
    return np.column_stack([np.cos(theta) * np.sin(polar), np.sin(theta) * np.sin(polar), np.cos(polar)])


def _lead_field(sources: np.ndarray, sensors: int, rng: np.random.Generator, radius: float = 1.2) -> np.ndarray:
    # sensors at random positions on a larger sphere, inverse-square falloff,
    # unit-norm columns; neighboring sources get strongly correlated columns
    pos = rng.standard_normal((sensors, 3))
    pos *= radius / np.linalg.norm(pos, axis=1, keepdims=True)
    dist2 = np.sum((pos[:, None, :] - sources[None, :, :]) ** 2, axis=2)
    phi = 1.0 / dist2
    return phi / np.linalg.norm(phi, axis=0)


def _sphere_mesh(n: int, neighbors: int) -> WeightedGraph:
    # mesh points joined to their nearest neighbors
    pts = mesh_points(n)
    _, idx = cKDTree(pts).query(pts, neighbors + 1)
    pairs = {(min(a, b), max(a, b)) for a, row in enumerate(idx) for b in row[1:].tolist()}
    return WeightedGraph(n, [(a, b, 1.0) for a, b in sorted(pairs)])


def eeg_like(
    sensors: int = 20,
    sources: int = 200,
    sparsity: float = 0.05,
    noise: float = 0.01,
    seed: int = 0,
    patches: int = 2,
    tv_weight: float = 0.2,
    l1_weight: float = 0.1,
    neighbors: int = 6,
    sensor_radius: float = 1.2,
) -> Instance:
    """Sparse source recovery on a spherical mesh.

    The ground truth is nonnegative and constant on ``patches`` connected
    patches covering about ``sparsity * sources`` vertices. ``phi`` maps
    sources to sensors placed at random on a sphere of radius
    ``sensor_radius`` with inverse-square falloff and unit-norm columns, so
    nearby sources are hard to tell apart; ``y = phi @ truth + noise``. Penalties: ``l1_weight * |x_v|`` with ``x >= 0`` and graph TV
    with ``tv_weight`` on every mesh edge.
    """
    if sensors < 1 or sources < 2 or not 0 < sparsity <= 1 or patches < 1:
        raise ValueError("invalid eeg_like sizes")
    rng = np.random.default_rng(seed)
    mesh = _sphere_mesh(sources, neighbors)
    adj = [[] for _ in range(sources)]
    for a, b, _ in mesh.edges:
        adj[a].append(b)
        adj[b].append(a)
    active = max(patches, int(round(sparsity * sources)))
    truth = np.zeros(sources)
    per_patch = np.full(patches, active // patches)
    per_patch[: active % patches] += 1
    for size in per_patch.tolist():
        start = int(rng.choice(np.flatnonzero(truth == 0)))
        patch, frontier = [start], [start]
        seen = {start}
        while len(patch) < size and frontier:
            v = frontier.pop(0)
            for b in adj[v]:
                if b not in seen and truth[b] == 0 and len(patch) < size:
                    seen.add(b)
                    patch.append(b)
                    frontier.append(b)
        truth[patch] = rng.uniform(1.0, 2.0)
    phi = _lead_field(mesh_points(sources), sensors, rng, sensor_radius)
    y = phi @ truth + noise * rng.standard_normal(sensors)
    graph = mesh.scaled(tv_weight)
    return Instance(
        graph, y=y, phi=phi, lam=np.full(sources, l1_weight), nonneg=True, truth=truth,
        meta={"sensors": sensors, "sources": sources},
    )


def multilabel_grid(
    rows: int = 8,
    cols: int = 8,
    classes: int = 3,
    noise: float = 0.05,
    seed: int = 0,
    beta: float = 0.1,
    tv_weight: float = 0.3,
) -> Instance:
    """Grid with two homogeneous label regions (left/right halves).

    Each ``q_v`` puts mass 0.8 on the region label and spreads the rest,
    then is perturbed by ``noise * uniform`` and renormalized.
    """
    if rows < 1 or cols < 1 or classes < 2:
        raise ValueError("invalid multilabel_grid sizes")
    rng = np.random.default_rng(seed)
    labels = np.zeros((rows, cols), dtype=int)
    labels[:, cols // 2 :] = 1
    labels = labels.ravel()
    n = rows * cols
    q = np.full((n, classes), 0.2 / (classes - 1))
    q[np.arange(n), labels] = 0.8
    q = q + noise * rng.random(q.shape)
    q /= q.sum(axis=1, keepdims=True)
    truth = np.zeros((n, classes))
    truth[np.arange(n), labels] = 1.0
    return Instance(grid_graph(rows, cols, tv_weight), q=q, beta=beta, truth=labels.astype(float))


GENERATORS = {
    "fused1d": fused1d,
    "fused2d": fused2d,
    "eeg_like": eeg_like,
    "multilabel_grid": multilabel_grid,
}


def dice_score(x, truth, eps: float = 1e-6) -> float:
    """``2 |A & B| / (|A| + |B|)`` for the supports ``|x| > eps`` and ``|truth| > eps``."""
    a = np.abs(np.asarray(x, dtype=float)) > eps
    b = np.abs(np.asarray(truth, dtype=float)) > eps
    total = a.sum() + b.sum()
    if total == 0:
        return 1.0
    return float(2 * np.sum(a & b) / total)
