"""Problem files, CSV readers/writers and schema validation.

A problem file is a JSON document; relative paths inside it are resolved
against the directory of the file. Scalar problem::

    {
      "vertex_count": 6,
      "graph": "edges.csv",                  # or [[u, v, w], ...]
      "tv_scale": 1.0,
      "smooth": {"kind": "quadratic", "y": "y.csv",
                 "phi": {"path": "phi.csv", "format": "dense"}},
      "nonsmooth": {"kind": "abs_nonneg", "lam": 0.1}
    }

Vector-valued problem: replace ``smooth``/``nonsmooth`` by
``"multidim": {"K": 3, "q": "q.csv", "beta": 0.1}``.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import jsonschema
import numpy as np
import scipy.sparse as sp

from .functional import (
    ProblemSpec,
    QuadraticFidelity,
    Separable,
    ZeroSmooth,
)
from .graph import WeightedGraph
from .multidim import KLFidelity, MultiProblemSpec

__all__ = [
    "PROBLEM_SCHEMA",
    "ProblemFileError",
    "validate_problem",
    "load_problem",
    "read_edge_list",
    "write_edge_list",
    "read_vector",
    "write_vector",
    "read_matrix",
    "write_matrix",
    "write_solution",
    "read_solution",
    "write_rows",
    "write_problem",
    "problem_from_dict",
]

_number_or_data = {
    "oneOf": [
        {"type": "number"},
        {"type": "array", "items": {"type": "number"}},
        {"type": "string", "minLength": 1},
    ]
}

PROBLEM_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["vertex_count", "graph"],
    "additionalProperties": False,
    "properties": {
        "vertex_count": {"type": "integer", "minimum": 0},
        "graph": {
            "oneOf": [
                {"type": "string", "minLength": 1},
                {
                    "type": "array",
                    "items": {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3},
                },
            ]
        },
        "tv_scale": {"type": "number", "minimum": 0},
        "smooth": {
            "type": "object",
            "required": ["kind"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["quadratic", "zero"]},
                "y": _number_or_data,
                "phi": {
                    "type": "object",
                    "required": ["path"],
                    "additionalProperties": False,
                    "properties": {
                        "path": {"type": "string", "minLength": 1},
                        "format": {"enum": ["dense", "triplets"]},
                        "shape": {"type": "array", "items": {"type": "integer", "minimum": 0},
                                  "minItems": 2, "maxItems": 2},
                    },
                },
            },
            "if": {"properties": {"kind": {"const": "quadratic"}}},
            "then": {"required": ["y"]},
        },
        "nonsmooth": {
            "type": "object",
            "required": ["kind"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["zero", "abs", "nonneg", "abs_nonneg", "box"]},
                "lam": _number_or_data,
                "lower": _number_or_data,
                "upper": _number_or_data,
            },
        },
        "multidim": {
            "type": "object",
            "required": ["K", "q", "beta"],
            "additionalProperties": False,
            "properties": {
                "K": {"type": "integer", "minimum": 2},
                "q": {"type": "string", "minLength": 1},
                "beta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
            },
        },
    },
    "oneOf": [
        {"required": ["smooth", "nonsmooth"], "not": {"required": ["multidim"]}},
        {"required": ["multidim"], "not": {"anyOf": [{"required": ["smooth"]}, {"required": ["nonsmooth"]}]}},
    ],
}


class ProblemFileError(ValueError):
    """Malformed or inconsistent problem file."""


def _field(error: jsonschema.ValidationError) -> str:
    path = ".".join(str(p) for p in error.absolute_path)
    return path or "<root>"


def validate_problem(doc) -> None:
    """Raise :class:`ProblemFileError` naming the first offending field."""
    validator = jsonschema.Draft202012Validator(PROBLEM_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: (len(list(e.absolute_path)), str(e.message)))
    if errors:
        # deepest error is usually the most specific
        err = max(errors, key=lambda e: len(list(e.absolute_path)))
        if err.validator == "oneOf" and not list(err.absolute_path):
            raise ProblemFileError(
                "field '<root>': give either 'smooth' and 'nonsmooth', or a 'multidim' block"
            )
        raise ProblemFileError(f"field '{_field(err)}': {err.message}")


# ---------------------------------------------------------------------------
# CSV


def _fmt(x) -> str:
    return repr(float(x))


def read_edge_list(path) -> list[tuple[int, int, float]]:
    """Read ``u,v,w`` rows; a header row is skipped if present."""
    rows = []
    with open(path, newline="") as fh:
        for i, rec in enumerate(csv.reader(fh)):
            if not rec or not "".join(rec).strip():
                continue
            if i == 0 and not _is_number(rec[0]):
                continue
            if len(rec) != 3:
                raise ProblemFileError(f"{path}: line {i + 1}: expected u,v,w")
            rows.append((int(rec[0]), int(rec[1]), float(rec[2])))
    return rows


def write_edge_list(path, graph: WeightedGraph) -> None:
    write_rows(path, ("u", "v", "w"), [(a, b, _fmt(c)) for a, b, c in graph.edges])


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def read_vector(path) -> np.ndarray:
    """One number per line (or comma-separated on one line)."""
    data = np.loadtxt(path, delimiter=",", ndmin=1)
    return data.ravel()


def write_vector(path, x) -> None:
    with open(path, "w", newline="") as fh:
        for v in np.asarray(x, dtype=float).ravel():
            fh.write(_fmt(v) + "\n")


def read_matrix(path, fmt: str = "dense", shape=None):
    """Dense rows, or ``i,j,value`` triplets (header optional) as a CSR matrix."""
    if fmt == "dense":
        return np.loadtxt(path, delimiter=",", ndmin=2)
    rows, cols, vals = [], [], []
    with open(path, newline="") as fh:
        for k, rec in enumerate(csv.reader(fh)):
            if not rec:
                continue
            if k == 0 and not _is_number(rec[0]):
                continue
            rows.append(int(rec[0]))
            cols.append(int(rec[1]))
            vals.append(float(rec[2]))
    if shape is None:
        shape = (max(rows, default=-1) + 1, max(cols, default=-1) + 1)
    return sp.csr_matrix((vals, (rows, cols)), shape=tuple(shape))


def write_matrix(path, m) -> None:
    m = np.atleast_2d(np.asarray(m, dtype=float))
    with open(path, "w", newline="") as fh:
        for row in m:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_rows(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def write_solution(path, x) -> None:
    """``vertex,value`` for scalar values, ``vertex,k,value`` for vector values."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        write_rows(path, ("vertex", "value"), [(v, _fmt(a)) for v, a in enumerate(x)])
    else:
        write_rows(
            path, ("vertex", "k", "value"),
            [(v, k, _fmt(x[v, k])) for v in range(x.shape[0]) for k in range(x.shape[1])],
        )


def read_solution(path) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        recs = [r for r in reader if r]
    if header == ["vertex", "value"]:
        x = np.empty(len(recs))
        for v, a in recs:
            x[int(v)] = float(a)
        return x
    if header == ["vertex", "k", "value"]:
        n = 1 + max(int(r[0]) for r in recs)
        k = 1 + max(int(r[1]) for r in recs)
        x = np.empty((n, k))
        for v, j, a in recs:
            x[int(v), int(j)] = float(a)
        return x
    raise ProblemFileError(f"{path}: unknown solution header {header}")


# ---------------------------------------------------------------------------
# problem loading


def _data(value, base: Path, n: int, name: str) -> np.ndarray:
    if isinstance(value, str):
        path = base / value
        if not path.exists():
            raise ProblemFileError(f"field '{name}': file not found: {path}")
        arr = read_vector(path)
    else:
        arr = np.asarray(value, dtype=float)
    arr = np.broadcast_to(arr, (n,)) if arr.ndim == 0 else arr
    if arr.shape != (n,):
        raise ProblemFileError(f"field '{name}': expected {n} values, got {arr.size}")
    return np.array(arr, dtype=float)


def _nonsmooth(doc: dict, base: Path, n: int) -> Separable:
    kind = doc["kind"]
    lam = _data(doc.get("lam", 0.0), base, n, "nonsmooth.lam")
    if kind in ("abs", "abs_nonneg") and "lam" not in doc:
        raise ProblemFileError(f"field 'nonsmooth.lam': required for kind '{kind}'")
    if kind in ("zero", "nonneg", "box"):
        if "lam" in doc:
            raise ProblemFileError(f"field 'nonsmooth.lam': not used by kind '{kind}'")
    lower = np.full(n, -np.inf)
    upper = np.full(n, np.inf)
    if kind in ("nonneg", "abs_nonneg"):
        lower[:] = 0.0
    if kind == "box":
        if "lower" not in doc or "upper" not in doc:
            raise ProblemFileError("field 'nonsmooth.lower': box needs 'lower' and 'upper'")
        lower = _data(doc["lower"], base, n, "nonsmooth.lower")
        upper = _data(doc["upper"], base, n, "nonsmooth.upper")
    if np.any(lam < 0):
        raise ProblemFileError("field 'nonsmooth.lam': weights must be nonnegative")
    if np.any(lower > upper):
        raise ProblemFileError("field 'nonsmooth.lower': lower exceeds upper for some vertex")
    return Separable.from_arrays(lam, lower, upper)


def load_problem(path) -> ProblemSpec | MultiProblemSpec:
    """Parse, validate and assemble a problem file.

    Raises
    ------
    ProblemFileError
        Malformed JSON, schema violation (the message names the field),
        missing referenced file or inconsistent dimensions.
    """
    path = Path(path)
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ProblemFileError(f"{path}: invalid JSON: {exc}") from exc
    except OSError as exc:
        raise ProblemFileError(f"{path}: {exc.strerror}") from exc
    return problem_from_dict(doc, path.parent)


def problem_from_dict(doc, base=".") -> ProblemSpec | MultiProblemSpec:
    validate_problem(doc)
    base = Path(base)
    n = doc["vertex_count"]
    if n == 0:
        raise ProblemFileError("field 'vertex_count': empty graph")
    g = doc["graph"]
    if isinstance(g, str):
        gpath = base / g
        if not gpath.exists():
            raise ProblemFileError(f"field 'graph': file not found: {gpath}")
        edges = read_edge_list(gpath)
    else:
        edges = [tuple(e) for e in g]
    try:
        graph = WeightedGraph(n, edges)
    except ValueError as exc:
        raise ProblemFileError(f"field 'graph': {exc}") from exc
    scale = float(doc.get("tv_scale", 1.0))
    if scale != 1.0:
        graph = graph.scaled(scale)

    if "multidim" in doc:
        md = doc["multidim"]
        qpath = base / md["q"]
        if not qpath.exists():
            raise ProblemFileError(f"field 'multidim.q': file not found: {qpath}")
        q = read_matrix(qpath)
        if q.shape != (n, md["K"]):
            raise ProblemFileError(f"field 'multidim.q': expected {n}x{md['K']}, got {q.shape[0]}x{q.shape[1]}")
        try:
            return MultiProblemSpec(graph, KLFidelity(q, md["beta"]))
        except ValueError as exc:
            raise ProblemFileError(f"field 'multidim.q': {exc}") from exc

    sm = doc["smooth"]
    if sm["kind"] == "zero":
        smooth = ZeroSmooth()
    else:
        phi = None
        if "phi" in sm:
            ppath = base / sm["phi"]["path"]
            if not ppath.exists():
                raise ProblemFileError(f"field 'smooth.phi.path': file not found: {ppath}")
            phi = read_matrix(ppath, sm["phi"].get("format", "dense"), sm["phi"].get("shape"))
            if phi.shape[1] != n:
                raise ProblemFileError(f"field 'smooth.phi': {phi.shape[1]} columns for {n} vertices")
        m = n if phi is None else phi.shape[0]
        y = _data(sm["y"], base, m, "smooth.y")
        smooth = QuadraticFidelity(y, phi)
    return ProblemSpec(graph, smooth, _nonsmooth(doc["nonsmooth"], base, n))


def write_problem(path, doc: dict) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
