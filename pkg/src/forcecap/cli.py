"""Command-line front end.

Exit codes: 0 success, 1 input or schema error, 2 rank-deficient Jacobian,
3 capacity or feasibility error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from .export import facets_for, polytope_document, read_polytope_json, to_csv, to_json, to_off
from .geometry import ellipsoid, hull, intersection_stacked, minkowski_sum
from .kinematics import (ModelError, TaskFrame, describe, gravity_torque, jacobian, residual_limits)
from .loadshare import CapacityExhausted, load_scenario, simulate
from .vertex_search import (CapacityError, RankDeficient, SearchStats, TorqueBox, VertexSet, canonicalize,
                            force_polytope_vertices, velocity_polytope_vertices)

EXIT_OK, EXIT_INPUT, EXIT_RANK, EXIT_CAPACITY = 0, 1, 2, 3


class InputError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _floats(text: str, flag: str) -> np.ndarray:
    try:
        return np.array([float(x) for x in text.split(",") if x.strip()], dtype=float)
    except ValueError:
        raise InputError(f"{flag}: expected comma-separated numbers, got {text!r}") from None


def _frame(text: str | None, model) -> TaskFrame:
    if text is None:
        return TaskFrame(("x", "y")) if model.is_planar else TaskFrame(("x", "y", "z"))
    return TaskFrame.parse(text)


def _config(model, text: str, flag: str = "--q") -> np.ndarray:
    q = _floats(text, flag)
    if q.size != model.n:
        raise InputError(f"{flag}: {model.name} has {model.n} joints, got {q.size} values")
    return q


def _emit(text: str, out_path: str | None) -> None:
    if out_path:
        Path(out_path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _render(vs: VertexSet, axes, kind: str, fmt: str, params: dict, ell=None) -> str:
    if fmt == "json":
        return to_json(polytope_document(vs, axes, kind, facets=facets_for(vs), params=params, ellipsoid=ell))
    if fmt == "csv":
        return to_csv(vs, axes)
    if fmt == "off":
        if vs.task_dim != 3:
            raise InputError(f"--out off needs a 3-axis task frame, got {vs.task_dim}")
        P = hull(vs.vertices)
        if P.degenerate:
            raise InputError("polytope is degenerate; OFF export has no facets")
        return to_off(P)
    raise InputError(f"unknown output format {fmt!r}")


# --- polytope ---------------------------------------------------------------

def cmd_polytope(args) -> int:
    model = describe(args.model)
    q = _config(model, args.q)
    frame = _frame(args.task, model)
    if frame.m > model.n:
        raise InputError(f"--task has {frame.m} axes but {model.name} has only {model.n} joints")
    J = jacobian(model, q, frame)
    params = {"model": model.name, "q": q.tolist(), "task": list(frame.axes), "kind": args.kind}
    ell = None
    if args.kind == "velocity":
        box = TorqueBox(*model.velocity_limits)
        vs = velocity_polytope_vertices(J, box)
        if args.ellipsoid:
            ell = ellipsoid(J, box, "velocity")
    else:
        lo, hi = model.torque_limits
        if args.kind == "residual":
            tau_g = gravity_torque(model, q) if args.bias_g else None
            tau_d = _floats(args.tau_d, "--tau-d") if args.tau_d else None
            tau_n = None
            if args.bias_n:
                f_n = _floats(args.bias_n, "--bias-n")
                if f_n.size != frame.m:
                    raise InputError(f"--bias-n: expected {frame.m} values for task {','.join(frame.axes)}")
                tau_n = J.T @ f_n
                params["bias_n"] = f_n.tolist()
            lo, hi, flagged = residual_limits((lo, hi), tau_g, tau_d, tau_n, warn=False)
            params["bias_g"] = bool(args.bias_g)
            if flagged:
                params["bias_warning_joints"] = flagged
                print(f"warning: bias exceeds one-sided torque capacity on joints {flagged}", file=sys.stderr)
        elif args.bias_g or args.bias_n or args.tau_d:
            raise InputError("--bias-g/--bias-n/--tau-d apply to --kind residual only")
        box = TorqueBox(lo, hi)
        vs = force_polytope_vertices(J, box)
        if args.ellipsoid:
            ell = ellipsoid(J, box, "force")
    _emit(_render(vs, frame.axes, args.kind, args.out, params, ell), args.output)
    return EXIT_OK


# --- bench ------------------------------------------------------------------

def cmd_bench(args) -> int:
    model = describe(args.model)
    frame = _frame(args.task, model)
    result = bench_mod.run_bench(model, frame, trials=args.trials, seed=args.seed, baseline=args.baseline,
                                 prune_check=args.prune_check, workers=args.workers)
    print(f"# near-singular rejection: smallest/largest singular value < {bench_mod.NEAR_SINGULAR_RATIO:g}; "
          f"{bench_mod.WARMUP} warm-up runs excluded", file=sys.stderr)
    for rec in result.records:
        print(rec.summary(), file=sys.stderr)
    csv_text = bench_mod.records_to_csv(result.records)
    if args.csv:
        Path(args.csv).write_text(csv_text, encoding="utf-8")
    else:
        sys.stdout.write(csv_text)
    status = EXIT_OK
    if result.baseline_equal is not None:
        print(f"baseline equality: {'pass' if result.baseline_equal else 'FAIL'}", file=sys.stderr)
        status = status if result.baseline_equal else EXIT_CAPACITY
    if result.prune_equal is not None:
        print(f"pruning equality: {'pass' if result.prune_equal else 'FAIL'}", file=sys.stderr)
        status = status if result.prune_equal else EXIT_CAPACITY
    return status


# --- combine ----------------------------------------------------------------

def _operand(spec_path: str, q_text: str | None, frame_text: str | None):
    """A robot (model + q) or a stored polytope JSON document."""
    path = Path(spec_path)
    if path.exists():
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: invalid JSON ({exc})") from None
        if isinstance(doc, dict) and "vertices" in doc:
            vs, _ = read_polytope_json(doc)
            return {"vertices": vs, "axes": doc.get("axes")}
    model = describe(spec_path)
    if q_text is None:
        raise InputError(f"{spec_path}: a joint configuration is required for robot operands")
    q = _config(model, q_text)
    frame = _frame(frame_text, model)
    J = jacobian(model, q, frame)
    return {"model": model, "J": J, "box": TorqueBox(*model.torque_limits), "axes": list(frame.axes)}


def cmd_combine(args) -> int:
    a = _operand(args.first, args.q1, args.task)
    b = _operand(args.second, args.q2, args.task)
    axes = a["axes"] or b["axes"]
    if args.op == "intersect":
        if "J" not in a or "J" not in b:
            raise InputError("intersect needs two robot operands")
        P, vs = intersection_stacked(a["J"], b["J"], a["box"], b["box"])
    else:
        stats = SearchStats()
        polys = []
        for op in (a, b):
            vs_i = op["vertices"] if "vertices" in op else force_polytope_vertices(op["J"], op["box"])
            stats = stats + vs_i.stats
            polys.append(hull(vs_i.vertices))
        if polys[0].dim != polys[1].dim:
            raise InputError(f"operands differ in dimension: {polys[0].dim} vs {polys[1].dim}")
        P = minkowski_sum(polys[0], polys[1])
        vs = VertexSet(P.dim, P.vertices, stats)
    vs = VertexSet(vs.task_dim, canonicalize(vs.vertices, task_dim=vs.task_dim, check_extreme=False).vertices,
                   vs.stats)
    params = {"op": args.op, "operands": [args.first, args.second]}
    _emit(_render(vs, axes or [f"a{i}" for i in range(vs.task_dim)], f"combine-{args.op}", args.out, params),
          args.output)
    return EXIT_OK


# --- loadshare --------------------------------------------------------------

def cmd_loadshare(args) -> int:
    scenario = load_scenario(args.scenario, payload_mass=args.payload_mass)
    trace = simulate(scenario, args.policy, workers=args.workers)
    _emit(trace.to_csv(), args.output)
    bad = trace.infeasible_steps()
    print(f"infeasible steps: adaptive={bad['adaptive']} fixed:0.5={bad['half']} "
          f"(of {len(trace)}, G={trace.weight:.2f} N, policy {trace.policy})", file=sys.stderr)
    return EXIT_OK


def cmd_describe(args) -> int:
    model = describe(args.model)
    lo, hi = model.torque_limits
    print(f"{model.name}: n={model.n}, gravity={list(model.gravity)}")
    for i, j in enumerate(model.joints):
        print(f"  joint {i}: {j.kind} dh={list(j.dh)} mass={j.mass} torque=[{lo[i]}, {hi[i]}] "
              f"vel=[{j.vel_min}, {j.vel_max}]")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="forcecap", description="Task-space force and velocity capability polytopes.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sp = sub.add_parser("polytope", help="vertices of a force, velocity or residual polytope")
    sp.add_argument("model", help="robot description JSON (path or bundled name)")
    sp.add_argument("--q", required=True, help="joint configuration, comma-separated radians")
    sp.add_argument("--task", help="task axes, e.g. x,y,z (default x,y for planar robots, else x,y,z)")
    sp.add_argument("--kind", choices=("force", "velocity", "residual"), default="force")
    sp.add_argument("--bias-g", action="store_true", help="subtract gravity torques (residual)")
    sp.add_argument("--bias-n", metavar="F_N", help="nominal task wrench already applied (residual)")
    sp.add_argument("--tau-d", metavar="TAU_D", help="dynamic torque to subtract (residual)")
    sp.add_argument("--ellipsoid", action="store_true", help="add the matching ellipsoid to JSON output")
    sp.add_argument("--out", choices=("json", "off", "csv"), default="json")
    sp.add_argument("-o", "--output", help="write to file instead of stdout")
    sp.set_defaults(func=cmd_polytope)

    sp = sub.add_parser("bench", help="seeded vertex-search benchmark")
    sp.add_argument("model")
    sp.add_argument("--trials", type=int, default=1000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--task")
    sp.add_argument("--baseline", action="store_true", help="also run the full n x n system and compare")
    sp.add_argument("--prune-check", action="store_true", help="rerun without bound pruning and compare")
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--csv", help="write records CSV to file")
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("combine", help="Minkowski sum or intersection of two robots' force polytopes")
    sp.add_argument("first", help="robot description or polytope JSON")
    sp.add_argument("second", help="robot description or polytope JSON")
    sp.add_argument("--q1")
    sp.add_argument("--q2")
    sp.add_argument("--task")
    sp.add_argument("--op", choices=("sum", "intersect"), default="sum")
    sp.add_argument("--out", choices=("json", "off", "csv"), default="json")
    sp.add_argument("-o", "--output")
    sp.set_defaults(func=cmd_combine)

    sp = sub.add_parser("loadshare", help="dual-arm load-sharing simulation")
    sp.add_argument("scenario")
    sp.add_argument("--policy", default="adaptive", help="adaptive or fixed:<lambda>")
    sp.add_argument("--payload-mass", type=float, help="override the scenario payload [kg]")
    sp.add_argument("--out", choices=("csv",), default="csv")
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("-o", "--output")
    sp.set_defaults(func=cmd_loadshare)

    sp = sub.add_parser("describe", help="print a robot description")
    sp.add_argument("model")
    sp.set_defaults(func=cmd_describe)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except RankDeficient as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RANK
    except (CapacityError, CapacityExhausted) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except (InputError, ModelError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
