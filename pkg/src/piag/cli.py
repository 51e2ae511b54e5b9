"""Command-line entry point: generate problems, run solves, verify the
descent inequalities on a recorded run, fit convergence rates, and sweep the
delay parameter.

Exit codes: 0 success/converged, 1 input error, 2 iteration budget
exhausted, 3 divergence, 4 inequality violations found by ``verify``.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import diagnostics, problems
from .delay import DelaySchedule, schedule_from_dict
from .model import Problem, load_problem, save_problem, smoothness_totals
from .solver import (SolverConfig, Trace, rate_constants, read_iterates_csv,
                     read_trace_csv, reference_fbs, solve, stepsize_threshold,
                     write_iterates_csv, write_trace_csv)

_EXIT_BY_TERMINATION = {"converged": 0, "max_iters": 2, "diverged": 3}

_CONFIG_KEYS = {"alpha", "tau", "schedule", "max_iters", "tol", "x0", "seed",
                "c0", "trace_every", "enforce_theory"}


class CliError(Exception):
    """Input error carrying a machine-parseable code."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    # The exit-code contract reserves 2 for non-convergence, so usage errors
    # must not use argparse's default exit status.
    def error(self, message):
        self.exit(1, f"piag: error: bad-usage: {message}\n")


def _info(args, message: str) -> None:
    if not args.quiet:
        print(message)


def _write_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_problem(path) -> Problem:
    if not os.path.exists(path):
        raise CliError("missing-file", f"problem file not found: {path}")
    try:
        return load_problem(path)
    except ValueError as exc:
        raise CliError("bad-problem", str(exc)) from exc


def _load_config_dict(path) -> dict:
    if path is None:
        return {}
    if not os.path.exists(path):
        raise CliError("missing-file", f"config file not found: {path}")
    with open(path) as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CliError("bad-config", f"{path}: line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(obj, dict):
        raise CliError("bad-config", f"{path}: run config must be a JSON object")
    unknown = sorted(set(obj) - _CONFIG_KEYS)
    if unknown:
        raise CliError("bad-config", f"{path}: unknown field(s) {unknown}")
    return obj


def _parse_x0(spec, dimension: int) -> np.ndarray:
    if spec is None or spec == "zeros":
        return np.zeros(dimension)
    if isinstance(spec, str):
        try:
            values = [float(v) for v in spec.split(",")]
        except ValueError as exc:
            raise CliError("bad-config", f"cannot parse x0 {spec!r}") from exc
    else:
        values = [float(v) for v in spec]
    if len(values) != dimension:
        raise CliError("bad-config",
                       f"x0 has {len(values)} entries, problem dimension is {dimension}")
    return np.asarray(values)


def _default_schedule(tau: int, n_components: int, kind: str | None,
                      block: int | None, seed: int | None) -> DelaySchedule:
    if kind is None:
        kind = "none" if tau == 0 else "cyclic"
    if kind == "cyclic" and block is None:
        block = math.ceil(n_components / (tau + 1))
    return DelaySchedule(kind=kind, tau=tau, block=block, seed=seed)


def _build_config(args, problem: Problem) -> SolverConfig:
    """Merge the run-config file with CLI overrides into a SolverConfig."""
    cfg = _load_config_dict(getattr(args, "config", None))
    tau = args.tau if args.tau is not None else int(cfg.get("tau", 0))
    if tau < 0:
        raise CliError("bad-config", "tau must be nonnegative")
    seed = args.seed if args.seed is not None else cfg.get("seed")
    try:
        if "schedule" in cfg:
            schedule = schedule_from_dict(cfg["schedule"], default_tau=tau,
                                          default_seed=seed)
            if args.tau is not None and schedule.tau != args.tau:
                schedule = _default_schedule(args.tau, problem.n_components,
                                             schedule.kind, schedule.block, schedule.seed)
        else:
            schedule = _default_schedule(tau, problem.n_components,
                                         getattr(args, "schedule_kind", None),
                                         getattr(args, "block", None), seed)
        schedule.validate_for(problem.n_components)
    except ValueError as exc:
        raise CliError("bad-config", str(exc)) from exc

    alpha = args.alpha if args.alpha is not None else cfg.get("alpha", "auto_lemma2")
    if isinstance(alpha, str) and alpha not in ("auto_lemma2", "auto_c8"):
        try:
            alpha = float(alpha)
        except ValueError as exc:
            raise CliError("bad-config", f"cannot parse alpha {alpha!r}") from exc
    c0 = args.c0 if getattr(args, "c0", None) is not None else cfg.get("c0")
    return SolverConfig(
        alpha=alpha,
        schedule=schedule,
        x0=_parse_x0(args.x0 if args.x0 is not None else cfg.get("x0"), problem.dimension),
        max_iters=args.max_iters if args.max_iters is not None else int(cfg.get("max_iters", 10000)),
        prox_residual_tol=args.tol if args.tol is not None else float(cfg.get("tol", 1e-8)),
        trace_every=int(cfg.get("trace_every", 10)),
        enforce_theory=bool(cfg.get("enforce_theory", False)),
        c0=float(c0) if c0 is not None else None,
        keep_iterates=bool(getattr(args, "log_iterates", False)),
    )


def _schedule_dict(schedule: DelaySchedule) -> dict:
    out = {"kind": schedule.kind, "tau": schedule.tau}
    if schedule.block is not None:
        out["block"] = schedule.block
    if schedule.seed is not None:
        out["seed"] = schedule.seed
    return out


def _summary_dict(problem: Problem, config: SolverConfig, trace: Trace,
                  problem_path: str) -> dict:
    L, l = smoothness_totals(problem)
    tau = config.schedule.tau
    constants = {"L": L, "l": l, "tau": tau,
                 "step_threshold": stepsize_threshold(L, l, tau)}
    if config.c0 is not None:
        tc = rate_constants(L, l, tau, config.c0)
        constants.update({"c0": tc.c0, "c1": tc.c1, "c2": tc.c2, "c3": tc.c3,
                          "c4": tc.c4, "c5": tc.c5, "c6": tc.c6, "c7": tc.c7,
                          "c8": tc.c8, "contraction": tc.contraction(trace.alpha)})
    return {
        "problem_file": str(problem_path),
        "termination": trace.termination,
        "iterations": trace.iterations,
        "alpha": trace.alpha,
        "final_objective": trace.final_objective,
        "final_residual": trace.final_residual,
        "schedule": _schedule_dict(config.schedule),
        "constants": constants,
        "warnings": trace.warnings,
    }


def _value_separation(ref) -> float | None:
    """Smallest distance between stationary points with distinct objective
    values (points sharing a value do not constrain the separation)."""
    best = None
    pts = ref.points
    vals = ref.objective_values
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            if abs(vals[i] - vals[j]) > 1e-9 * (1.0 + abs(vals[i])):
                gap = float(np.linalg.norm(np.asarray(pts[i]) - np.asarray(pts[j])))
                best = gap if best is None else min(best, gap)
    return best


def cmd_generate(args) -> int:
    out_dir = args.out
    os.makedirs(out_dir, exist_ok=True)
    seed = args.seed if args.seed is not None else 0
    if args.family == "box":
        problem = problems.make_quadratic_box(args.components, args.dimension, seed,
                                              negative_curvature=args.negative_curvature)
    elif args.family == "l1":
        problem = problems.make_quadratic_l1(args.components, args.dimension, seed,
                                             lam=args.l1_weight)
    else:
        raise CliError("bad-usage", f"unknown family {args.family!r}")
    problem_path = os.path.join(out_dir, "problem.json")
    save_problem(problem, problem_path)
    L, l = smoothness_totals(problem)
    meta = {
        "family": args.family,
        "seed": seed,
        "components": args.components,
        "dimension": args.dimension,
        "negative_curvature": args.negative_curvature if args.family == "box" else None,
        "l1_weight": args.l1_weight if args.family == "l1" else None,
        "L": L,
        "l": l,
        "component_lipschitz": [c.lipschitz for c in problem.components],
        "component_weak_convexity": [c.weak_convexity for c in problem.components],
        "f_lower_bound_hint": problem.f_lower_bound_hint,
        "assumptions": {
            "objective_bounded_below": True,
            "error_bound_family": "quadratic_polyhedral",
        },
    }
    try:
        ref = problems.reference_solution(problem)
        meta["reference"] = {
            "method": ref.method,
            "points": [[float(v) for v in p] for p in ref.points],
            "objective_values": [float(v) for v in ref.objective_values],
        }
        meta["fitted_c0"] = problems.fit_error_bound_constant(problem, ref, seed=seed)
        meta["stationary_value_separation"] = _value_separation(ref)
    except problems.ReferenceUnavailableError:
        meta["reference"] = None
    _write_json(meta, os.path.join(out_dir, "problem_meta.json"))
    _info(args, f"wrote {problem_path} (family {args.family}, N={args.components}, "
                f"d={args.dimension})")
    return 0


def cmd_solve(args) -> int:
    problem = _load_problem(args.problem)
    config = _build_config(args, problem)
    os.makedirs(args.out, exist_ok=True)
    runner = reference_fbs if args.reference_fbs else solve
    try:
        trace = runner(problem, config)
    except ValueError as exc:
        raise CliError("bad-config", str(exc)) from exc
    write_trace_csv(trace, os.path.join(args.out, "trace.csv"))
    _write_json(_summary_dict(problem, config, trace, args.problem),
                os.path.join(args.out, "summary.json"))
    if config.keep_iterates:
        write_iterates_csv(trace.iterates, os.path.join(args.out, "iterates.csv"))
    _info(args, f"{trace.termination} after {trace.iterations} iterations "
                f"(F={trace.final_objective:.9g}, residual={trace.final_residual:.3g})")
    return _EXIT_BY_TERMINATION[trace.termination]


def _report_line(report: diagnostics.InequalityReport) -> str:
    return (f"{report.name}: checked={report.checked} violations={report.violations} "
            f"worst_margin={report.worst_margin:.6g}")


def cmd_verify(args) -> int:
    problem = _load_problem(args.problem)
    run_dir = args.run
    summary_path = os.path.join(run_dir, "summary.json")
    iterates_path = os.path.join(run_dir, "iterates.csv")
    if not os.path.exists(summary_path):
        raise CliError("missing-file", f"no summary.json in {run_dir}")
    if not os.path.exists(iterates_path):
        raise CliError("missing-iterates",
                       f"no iterates.csv in {run_dir}; re-run solve with --log-iterates")
    with open(summary_path) as fh:
        summary = json.load(fh)
    alpha = float(summary["alpha"])
    tau = int(summary["schedule"]["tau"])
    try:
        iterates = read_iterates_csv(iterates_path)
    except ValueError as exc:
        raise CliError("empty-trace", str(exc)) from exc
    L, l = smoothness_totals(problem)
    c0 = args.c0 if args.c0 is not None else summary.get("constants", {}).get("c0", 1.0)
    constants = rate_constants(L, l, tau, float(c0))
    trace = diagnostics.trace_from_iterates(problem, iterates, alpha)
    f_lower = problem.f_lower_bound_hint
    if f_lower is None:
        f_lower = float(np.min(trace.objective_values)) - 1.0
    reports = [diagnostics.check_sufficient_descent(trace, constants, alpha)]
    try:
        reports.append(diagnostics.check_summability(trace, alpha, constants, f_lower))
    except ValueError as exc:
        raise CliError("bad-config", str(exc)) from exc
    total = sum(r.violations for r in reports)
    _write_json({
        "alpha": alpha,
        "tau": tau,
        "reports": [vars(r) for r in reports],
        "violations_total": total,
    }, os.path.join(run_dir, "verify.json"))
    for r in reports:
        _info(args, _report_line(r))
    if total > 0:
        first = min(r.first_violation_k for r in reports if r.first_violation_k is not None)
        print(f"piag: verify: inequality violated at k={first}", file=sys.stderr)
        return 4
    return 0


def _fit_rate_from_records(records, skip_iters: int, limit: float | None):
    """Log-linear rate fit on trace checkpoints ``(k, F)``.

    With no explicit limit, the smallest recorded objective minus an epsilon
    pad is used; residuals within 100x of the pad are dropped as noise.
    """
    ks = np.asarray([r.k for r in records], dtype=float)
    fs = np.asarray([r.objective for r in records], dtype=float)
    if limit is None:
        f_min = float(np.min(fs))
        pad = 1e-14 * (1.0 + abs(f_min))
        limit = f_min - pad
        keep = (ks >= skip_iters) & (fs - limit > 100.0 * pad)
    else:
        keep = (ks >= skip_iters) & (fs - limit > 0.0)
    ks, fs = ks[keep], fs[keep]
    if len(ks) < 10:
        raise ValueError("need at least 10 usable trace records to fit a rate")
    y = np.log(fs - limit)
    dk = ks - ks.mean()
    slope = float(np.dot(dk, y - y.mean())) / float(np.dot(dk, dk))
    fitted = y.mean() + slope * dk
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - float(np.sum((y - fitted) ** 2)) / ss_tot
    return math.exp(slope), r2, float(limit)


def cmd_rate(args) -> int:
    run_dir = args.run
    trace_path = os.path.join(run_dir, "trace.csv")
    summary_path = os.path.join(run_dir, "summary.json")
    for path in (trace_path, summary_path):
        if not os.path.exists(path):
            raise CliError("missing-file", f"not found: {path}")
    records = read_trace_csv(trace_path)
    with open(summary_path) as fh:
        summary = json.load(fh)
    tau = int(summary["schedule"]["tau"])
    skip = args.skip if args.skip is not None else 5 * (tau + 1)
    try:
        rate, r2, limit = _fit_rate_from_records(records, skip, args.limit_value)
    except ValueError as exc:
        raise CliError("bad-config", str(exc)) from exc
    _write_json({"rate": rate, "log_linear_r2": r2, "limit": limit,
                 "transient_skip": skip}, os.path.join(run_dir, "rate.json"))
    _info(args, f"rate={rate:.6g} r2={r2:.4f} (limit={limit:.9g}, skip={skip})")
    return 0


def cmd_compare_delays(args) -> int:
    problem = _load_problem(args.problem)
    try:
        tau_list = [int(t) for t in args.tau_list.split(",")]
    except ValueError as exc:
        raise CliError("bad-usage", f"cannot parse tau list {args.tau_list!r}") from exc
    if any(t < 0 for t in tau_list):
        raise CliError("bad-usage", "tau values must be nonnegative")
    os.makedirs(args.out, exist_ok=True)
    L, l = smoothness_totals(problem)
    rows = []
    for tau in tau_list:
        kind = "none" if tau == 0 else args.schedule_kind
        schedule = _default_schedule(tau, problem.n_components, kind, None,
                                     args.seed if args.seed is not None else 0)
        config = SolverConfig(
            alpha=0.9 * stepsize_threshold(L, l, tau),
            schedule=schedule,
            x0=_parse_x0(args.x0, problem.dimension),
            max_iters=args.max_iters if args.max_iters is not None else 100000,
            prox_residual_tol=args.tol if args.tol is not None else 1e-8,
            trace_every=1,  # dense records so the rate fit has enough points
        )
        sub_dir = os.path.join(args.out, f"tau_{tau}")
        os.makedirs(sub_dir, exist_ok=True)
        trace = solve(problem, config)
        write_trace_csv(trace, os.path.join(sub_dir, "trace.csv"))
        _write_json(_summary_dict(problem, config, trace, args.problem),
                    os.path.join(sub_dir, "summary.json"))
        iters = trace.iterations if trace.termination == "converged" else -1
        try:
            rate, _, _ = _fit_rate_from_records(trace.records, 5 * (tau + 1), None)
        except ValueError:
            rate = math.nan
        rows.append((tau, trace.alpha, iters, rate))
    table_path = os.path.join(args.out, "compare_delays.csv")
    with open(table_path, "w") as fh:
        fh.write("tau,alpha,iters_to_tol,fitted_rate\n")
        for tau, alpha, iters, rate in rows:
            fh.write(f"{tau},{format(alpha, '.17g')},{iters},{format(rate, '.17g')}\n")
    _info(args, "tau alpha iters_to_tol fitted_rate")
    for tau, alpha, iters, rate in rows:
        _info(args, f"{tau} {alpha:.6g} {iters} {rate:.6g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--seed", type=int, default=None, help="seed override")
    common.add_argument("--quiet", action="store_true", help="suppress progress output")

    parser = _Parser(prog="piag",
                     description="Incremental aggregated proximal gradient solver "
                                 "and convergence diagnostics")
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("generate", parents=[common],
                           help="write a random test problem and its metadata")
    p_gen.add_argument("--family", choices=("box", "l1"), required=True)
    p_gen.add_argument("--components", type=int, required=True)
    p_gen.add_argument("--dimension", type=int, required=True)
    p_gen.add_argument("--negative-curvature", type=float, default=0.0)
    p_gen.add_argument("--l1-weight", type=float, default=1.0)
    p_gen.set_defaults(func=cmd_generate)

    p_solve = sub.add_parser("solve", parents=[common], help="run the solver")
    p_solve.add_argument("--problem", required=True)
    p_solve.add_argument("--config", default=None, help="run-config JSON file")
    p_solve.add_argument("--alpha", default=None,
                         help="stepsize, or auto_lemma2 / auto_c8")
    p_solve.add_argument("--tau", type=int, default=None)
    p_solve.add_argument("--schedule-kind", default=None,
                         choices=("none", "cyclic", "uniform_random", "adversarial_max"))
    p_solve.add_argument("--block", type=int, default=None)
    p_solve.add_argument("--max-iters", type=int, default=None)
    p_solve.add_argument("--tol", type=float, default=None)
    p_solve.add_argument("--x0", default=None, help="'zeros' or comma-separated values")
    p_solve.add_argument("--c0", type=float, default=None)
    p_solve.add_argument("--log-iterates", action="store_true",
                         help="also write the full iterate log")
    p_solve.add_argument("--reference-fbs", action="store_true",
                         help="run the direct forward-backward reference loop")
    p_solve.set_defaults(func=cmd_solve)

    p_verify = sub.add_parser("verify", parents=[common],
                              help="check the descent inequalities on a recorded run")
    p_verify.add_argument("--problem", required=True)
    p_verify.add_argument("--run", required=True, help="directory of a completed solve")
    p_verify.add_argument("--c0", type=float, default=None)
    p_verify.set_defaults(func=cmd_verify)

    p_rate = sub.add_parser("rate", parents=[common],
                            help="fit a geometric rate to the recorded objective")
    p_rate.add_argument("--run", required=True)
    p_rate.add_argument("--skip", type=int, default=None)
    p_rate.add_argument("--limit-value", type=float, default=None)
    p_rate.set_defaults(func=cmd_rate)

    p_cmp = sub.add_parser("compare-delays", parents=[common],
                           help="sweep the delay parameter on one problem")
    p_cmp.add_argument("--problem", required=True)
    p_cmp.add_argument("--tau-list", required=True)
    p_cmp.add_argument("--schedule-kind", default="adversarial_max",
                       choices=("cyclic", "uniform_random", "adversarial_max"))
    p_cmp.add_argument("--max-iters", type=int, default=None)
    p_cmp.add_argument("--tol", type=float, default=None)
    p_cmp.add_argument("--x0", default=None)
    p_cmp.set_defaults(func=cmd_compare_delays)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"piag: error: {exc.code}: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"piag: error: bad-input: {exc}", file=sys.stderr)
        return 1
    except RuntimeError as exc:
        print(f"piag: error: runtime: {exc}", file=sys.stderr)
        return 1


def console_entry() -> None:
    sys.exit(main())
