"""Command-line front-end: ``cutpursuit {solve,baseline,compare,gen,direction}``."""

from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from .direction import steepest_ternary_direction
from .driver import SolveOptions, cut_pursuit
from .functional import InfeasibleError, objective, snap_nonsmooth
from .generators import GENERATORS, dice_score
from .graph import Partition, refine_partition
from .io import ProblemFileError, load_problem, read_solution, read_vector, write_rows, write_solution
from .multidim import MultiProblemSpec, cut_pursuit_multidim, multi_objective
from .reduced import baseline_solve

__all__ = ["main", "build_parser"]


class CliError(Exception):
    pass


def _options(args) -> SolveOptions:
    return SolveOptions(
        tol_dir=args.tol_dir,
        tol_x=args.tol_x,
        eps_eq=args.eps_eq,
        eps_snap=args.eps_snap,
        merge_eps=args.merge_eps,
        max_iter=args.max_iter,
        reduced_tol_factor=args.reduced_tol_factor,
        reduced_max_iter=args.reduced_max_iter,
    )


def _objective(spec, x) -> float:
    if isinstance(spec, MultiProblemSpec):
        return multi_objective(spec, x)
    return objective(spec, x)


def _solve(spec, opts):
    if isinstance(spec, MultiProblemSpec):
        return cut_pursuit_multidim(spec, opts)
    return cut_pursuit(spec, opts)


def _write_text(path, text: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _component_count(spec, x, eps: float) -> int:
    n = spec.graph.vertex_count
    return len(refine_partition(spec.graph, Partition.whole(n), x, eps))


def cmd_solve(args) -> int:
    spec = load_problem(args.problem)
    sol = _solve(spec, _options(args))
    out = args.out or "solution.csv"
    write_solution(out, sol.x)
    if args.trace:
        _write_text(args.trace, sol.trace.to_csv())
    rec = sol.trace.records[-1]
    print(
        f"objective={rec.objective!r} components={rec.n_components} iterations={len(sol.trace)} "
        f"dir_deriv={rec.dir_deriv!r} stop={sol.trace.stop_reason}"
    )
    return 0


def cmd_baseline(args) -> int:
    spec = load_problem(args.problem)
    res = baseline_solve(spec, tol=args.tol, max_iter=args.baseline_max_iter, checkpoint=args.checkpoint)
    out = args.out or "baseline.csv"
    write_solution(out, res.x)
    if args.trace:
        write_rows(args.trace, ("iter", "elapsed_s", "objective"), [(i, repr(e), repr(o)) for i, e, o in res.trace])
    print(f"objective={_objective(spec, res.x)!r} iterations={res.iterations} converged={res.converged}")
    return 0


def cmd_compare(args) -> int:
    spec = load_problem(args.problem)
    tols = [float(t) for t in args.tols.split(",") if t.strip()]
    if not tols:
        raise CliError("--tols: empty tolerance list")
    truth = read_vector(args.truth) if args.truth else None
    header = ["solver", "tol", "objective", "wall_time_s", "iterations", "components"]
    if truth is not None:
        header.append("dice")
    rows = []
    for tol in tols:
        opts = _options(args)
        opts.tol_x = tol
        start = time.perf_counter()
        sol = _solve(spec, opts)
        elapsed = time.perf_counter() - start
        row = ["cut_pursuit", repr(tol), repr(sol.objective), repr(elapsed), len(sol.trace), len(sol.partition)]
        if truth is not None:
            row.append(repr(dice_score(sol.x, truth, args.dice_eps)))
        rows.append(row)

        start = time.perf_counter()
        res = baseline_solve(spec, tol=tol, max_iter=args.baseline_max_iter, checkpoint=0)
        elapsed = time.perf_counter() - start
        scale = float(np.max(np.abs(res.x))) if res.x.size else 0.0
        row = [
            "baseline", repr(tol), repr(_objective(spec, res.x)), repr(elapsed), res.iterations,
            _component_count(spec, res.x, tol * scale),
        ]
        if truth is not None:
            row.append(repr(dice_score(res.x, truth, args.dice_eps)))
        rows.append(row)
    write_rows(args.out or "comparison.csv", header, rows)
    for row in rows:
        print(",".join(str(c) for c in row))
    return 0


def cmd_gen(args) -> int:
    params = {"seed": args.seed}
    if args.noise is not None:
        params["noise"] = args.noise
    if args.kind == "fused1d":
        params["size"] = args.size if args.size is not None else 6
    elif args.kind in ("fused2d", "multilabel_grid"):
        params["rows"] = args.rows if args.rows is not None else (16 if args.kind == "fused2d" else 8)
        params["cols"] = args.cols if args.cols is not None else params["rows"]
        if args.kind == "multilabel_grid" and args.classes is not None:
            params["classes"] = args.classes
    elif args.kind == "eeg_like":
        if args.sensors is not None:
            params["sensors"] = args.sensors
        if args.size is not None:
            params["sources"] = args.size
        if args.sparsity is not None:
            params["sparsity"] = args.sparsity
    try:
        inst = GENERATORS[args.kind](**params)
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    path = inst.write(args.out or args.kind)
    print(path)
    return 0


def cmd_direction(args) -> int:
    spec = load_problem(args.problem)
    if isinstance(spec, MultiProblemSpec):
        raise CliError("direction: only scalar problems are supported")
    x = read_solution(args.point) if _has_header(args.point) else read_vector(args.point)
    if x.shape != (spec.vertex_count,):
        raise CliError(f"point has {x.size} values, problem has {spec.vertex_count} vertices")
    eps_snap = args.eps_snap if args.eps_snap is not None else 0.0
    eps_eq = args.eps_eq if args.eps_eq is not None else 0.0
    x = snap_nonsmooth(spec, x, eps_snap)
    res = steepest_ternary_direction(spec, x, eps_eq)
    print(f"dir_deriv={res.value!r}")
    counts = res.counts
    print(f"counts -1:{counts[-1]} 0:{counts[0]} +1:{counts[1]}")
    if args.out:
        write_rows(args.out, ("vertex", "d"), [(v, int(a)) for v, a in enumerate(res.d)])
    return 0


def _has_header(path) -> bool:
    with open(path) as fh:
        first = fh.readline()
    return first.strip().startswith("vertex")


def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    d = SolveOptions()
    p.add_argument("--tol-dir", type=float, default=d.tol_dir, help="stationarity tolerance on -F'(x, d)")
    p.add_argument("--tol-x", type=float, default=d.tol_x, help="relative iterate-evolution tolerance")
    p.add_argument("--eps-eq", type=float, default=None, help="equality tolerance on edges (default: automatic)")
    p.add_argument("--eps-snap", type=float, default=None, help="kink snapping tolerance (default: automatic)")
    p.add_argument("--merge-eps", type=float, default=None, help="merge tolerance (default: automatic)")
    p.add_argument("--max-iter", type=int, default=d.max_iter, help="outer iterations")
    p.add_argument("--reduced-tol-factor", type=float, default=d.reduced_tol_factor)
    p.add_argument("--reduced-max-iter", type=int, default=d.reduced_max_iter)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cutpursuit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="run cut-pursuit on a problem file")
    p.add_argument("problem")
    _add_solver_flags(p)
    p.add_argument("--out", help="solution CSV (default solution.csv)")
    p.add_argument("--trace", help="trace CSV")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("baseline", help="full-graph primal-dual reference solve")
    p.add_argument("problem")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--baseline-max-iter", type=int, default=100_000)
    p.add_argument("--checkpoint", type=int, default=100, help="trace every this many iterations")
    p.add_argument("--out", help="solution CSV (default baseline.csv)")
    p.add_argument("--trace", help="trace CSV")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("compare", help="cut-pursuit vs baseline over a tolerance list")
    p.add_argument("problem")
    p.add_argument("--tols", default="1e-4,1e-6", help="comma-separated tolerances")
    _add_solver_flags(p)
    p.add_argument("--baseline-max-iter", type=int, default=100_000)
    p.add_argument("--truth", help="ground-truth vector CSV; adds a Dice column")
    p.add_argument("--dice-eps", type=float, default=1e-6, help="support threshold of the Dice score")
    p.add_argument("--out", help="comparison CSV (default comparison.csv)")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("gen", help="write a synthetic instance")
    p.add_argument("kind", choices=sorted(GENERATORS))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float)
    p.add_argument("--size", type=int, help="fused1d length, eeg_like source count")
    p.add_argument("--rows", type=int)
    p.add_argument("--cols", type=int)
    p.add_argument("--classes", type=int, help="multilabel_grid label count")
    p.add_argument("--sensors", type=int, help="eeg_like sensor count")
    p.add_argument("--sparsity", type=float, help="eeg_like active fraction")
    p.add_argument("--out", help="output directory (default: the generator name)")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("direction", help="steepest ternary direction at a point")
    p.add_argument("problem")
    p.add_argument("point", help="vertex,value CSV or one value per line")
    p.add_argument("--eps-eq", type=float, default=None)
    p.add_argument("--eps-snap", type=float, default=None)
    p.add_argument("--out", help="write vertex,d CSV")
    p.set_defaults(func=cmd_direction)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ProblemFileError, InfeasibleError, CliError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
