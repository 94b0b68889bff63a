"""Command line harness: paired bound runs, CSV/JSON artifacts, verification.

`tdp run` loads a problem, runs the lower (cut) and/or upper (quadratic)
bound, and writes run.csv, timings.csv, meta.json and optional SVG figures.
`tdp verify` runs the invariant suites and prints one pass/fail line each.
"""

import argparse
import csv
import json
import os
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bellman import eig_extrema, stability_bounds
from .core import Opt
from .engine import (TdpRun, audit_points, brute_force_dp, check_monotone,
                     check_tight_at_draws, gap_metrics)
from .errors import TdpError
from .oracle import (SphereOracle, TrajectoryOracle, optimal_trajectory, seed_rng,
                     sphere_uniform)
from .problem import load_problem, slice_point, upper_model
from .selection import (MinPlusSelector, SddpSelector, SelectionOutcome,
                        verify_tight_valid)

GAP_THRESHOLD_DEFAULT = 1e-3


def _resolve_seed(value):
    if value is not None:
        return int(value)
    env = os.environ.get("TDP_SEED")
    return int(env) if env else 0


def _fmt(v):
    return "" if v is None else repr(float(v))


def run_experiment(problem, mode, iterations, N, seed, gap_threshold=None):
    """Run the requested sides in lockstep; returns rows, timings, metadata."""
    rng = seed_rng(seed)
    lower = upper = None
    if mode in ("sddp", "both"):
        if problem.x0 is None:
            raise ValueError("sddp/both modes need x0 in the problem file")
        lower = TdpRun(SddpSelector(problem), TrajectoryOracle(problem.x0), rng)
    if mode in ("minplus", "both"):
        upper = TdpRun(MinPlusSelector(upper_model(problem, N)), SphereOracle(), rng)
    eval_points = []
    stopped_at = None
    for k in range(1, iterations + 1):
        if lower is not None:
            lower.step()
        if upper is not None:
            upper.step()
        if lower is not None:
            pts = optimal_trajectory(problem, lower.envelopes, problem.x0)
        elif problem.x0 is not None:
            pts = [problem.x0] * (problem.T + 1)
        else:
            pts = list(upper.records[-1].points)
        eval_points.append(pts)
        if lower is not None and upper is not None and gap_threshold is not None:
            lo = lower.envelopes[0].value(problem.x0, upto=k)
            up = upper.envelopes[0].value(slice_point(problem.x0, upper.dim), upto=k)
            if (up - lo) / max(1.0, abs(up)) <= gap_threshold:
                stopped_at = k
                break

    rows = []
    if lower is not None and upper is not None:
        for r in gap_metrics(lower, upper, eval_points):
            rows.append({"iteration": r.iteration, "stage": r.stage,
                         "lower": r.lower, "upper": r.upper, "gap": r.gap})
    else:
        run = lower if lower is not None else upper
        side = "lower" if lower is not None else "upper"
        for k in range(1, run.iteration + 1):
            for t in range(run.T + 1):
                x = np.asarray(eval_points[k - 1][t], dtype=float)
                val = run.envelopes[t].value(slice_point(x, run.dim), upto=k)
                row = {"iteration": k, "stage": t, "lower": None, "upper": None,
                       "gap": None}
                row[side] = val
                rows.append(row)

    timings = []
    done = max(r.iteration for r in (lower or upper).records)
    for k in range(1, done + 1):
        entry = {"iteration": k, "sddp_ms": None, "minplus_ms": None}
        if lower is not None:
            entry["sddp_ms"] = float(np.sum(lower.records[k - 1].stage_ms))
        if upper is not None:
            entry["minplus_ms"] = float(np.sum(upper.records[k - 1].stage_ms))
        timings.append(entry)
    return rows, timings, stopped_at, lower, upper


def write_artifacts(outdir, rows, timings, meta, plot):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "run.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["iteration", "stage", "lower", "upper", "gap"])
        for r in rows:
            w.writerow([r["iteration"], r["stage"], _fmt(r["lower"]),
                        _fmt(r["upper"]), _fmt(r["gap"])])
    with open(outdir / "timings.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["iteration", "sddp_ms", "minplus_ms"])
        for t in timings:
            w.writerow([t["iteration"], _fmt(t["sddp_ms"]), _fmt(t["minplus_ms"])])
    (outdir / "meta.json").write_text(json.dumps(meta, indent=1, sort_keys=True))
    if plot:
        from . import plots
        plots.save_bounds_by_stage(rows, outdir / "bounds.svg")
        plots.save_gap_per_stage(rows, outdir)
        plots.save_timings(timings, outdir / "time.svg")


def cmd_run(args, parser):
    if args.iters < 1:
        parser.error("--iters must be at least 1")
    seed = _resolve_seed(args.seed)
    outdir = Path(args.out)
    try:
        problem = load_problem(args.problem)
    except (OSError, ValueError) as e:
        print(f"cannot load problem: {e}", file=sys.stderr)
        return 1
    if args.mode in ("minplus", "both") and problem.control_interval is not None \
            and args.N < 2:
        parser.error("--N must be at least 2 for a problem with a control interval")
    try:
        rows, timings, stopped_at, _, _ = run_experiment(
            problem, args.mode, args.iters, args.N, seed,
            gap_threshold=args.gap_threshold)
    except (TdpError, ValueError) as e:
        outdir.mkdir(parents=True, exist_ok=True)
        (outdir / "report.txt").write_text(f"run failed: {e}\n")
        print(f"run failed: {e}", file=sys.stderr)
        return 1
    meta = {
        "seed": seed,
        "config": {
            "problem": str(args.problem), "mode": args.mode, "iters": args.iters,
            "N": args.N, "out": str(args.out), "gap_threshold": args.gap_threshold,
            "plot": bool(args.plot),
        },
        "iterations_completed": stopped_at or min(args.iters, max(r["iteration"] for r in rows)),
        "stopped_by_gap_threshold": stopped_at is not None,
        "versions": {"tdp": __version__, "numpy": np.__version__,
                     "python": platform.python_version()},
    }
    if problem.lipschitz is not None:
        meta["lipschitz"] = list(problem.lipschitz)
    write_artifacts(outdir, rows, timings, meta, args.plot)
    print(f"wrote {outdir / 'run.csv'} ({len(rows)} rows)")
    return 0


def _verify_validity(run, samples, rng):
    """Worst validity excess over re-audited selections of a finished run."""
    worst = -np.inf
    sel = run.selector
    for rec in run.records:
        k = rec.iteration
        for t in range(run.T + 1):
            atom = run.envelopes[t].atoms[k - 1]
            outcome = SelectionOutcome(atom=atom, trial_point=rec.points[t],
                                       bellman_value=rec.selection_values[t])
            if run.kind is Opt.INF:
                pts = [sphere_uniform(rng, run.dim) for _ in range(samples)]
            else:
                pts = list(rec.points[t] + rng.standard_normal((samples, run.dim)))
            if t == run.T:
                bellman_at = lambda y: sel.bellman_value(run.T, None, y)
            else:
                bellman_at = lambda y, t=t, k=k: sel.bellman_value(
                    t, run.envelopes[t + 1], y, upto=k)
            audit = verify_tight_valid(outcome, bellman_at, pts)
            worst = max(worst, audit.max_violation)
    return worst


def run_verify_suites(problem, iters, N, seed, samples=30, inject_fault=None):
    """All invariant suites on fresh paired runs; returns (name, ok, detail)."""
    rng = seed_rng(seed)
    results = []
    lower = None
    if problem.x0 is not None:
        lower = TdpRun(SddpSelector(problem), TrajectoryOracle(problem.x0), rng)
        for _ in range(iters):
            lower.step()
    sp = upper_model(problem, N)
    upper = TdpRun(MinPlusSelector(sp), SphereOracle(), rng)
    for _ in range(iters):
        upper.step()

    if inject_fault == "cut-up" and lower is not None:
        # deliberately corrupt one stored cut; tightness replay must catch it
        t, k = 0, max(1, lower.iteration // 2)
        atom = lower.envelopes[t].atoms[k - 1]
        from .core import AffineCut
        lower.envelopes[t].atoms[k - 1] = AffineCut(
            slope=atom.slope, intercept=atom.intercept + 1.0, stage=atom.stage)

    runs = ([("lower", lower)] if lower is not None else []) + [("upper", upper)]
    for name, run in runs:
        rep = check_monotone(run, audit_points(run, per_stage=20, seed=seed))
        results.append((f"monotone/{name}", rep.ok,
                        f"max drift {max(rep.max_violation, rep.max_mismatch):.2e}"))
    for name, run in runs:
        rep = check_tight_at_draws(run)
        results.append((f"tightness/{name}", rep.ok(1e-7),
                        f"max deviation {rep.max_deviation:.2e}"))
    for name, run in runs:
        worst = _verify_validity(run, samples, np.random.default_rng([seed, 7]))
        results.append((f"validity/{name}", worst <= 1e-8, f"max excess {worst:.2e}"))

    bounds = stability_bounds(sp)
    worst_low, worst_high = 0.0, 0.0
    for t in range(upper.T + 1):
        for atom in upper.envelopes[t].atoms:
            lmin, lmax = eig_extrema(atom.matrix)
            worst_low = min(worst_low, lmin)
            worst_high = max(worst_high, lmax - bounds.betas[t])
    results.append(("loewner/upper", worst_low >= -1e-9 and worst_high <= 1e-9,
                    f"min eig {worst_low:.2e}, max excess {worst_high:.2e}"))

    if problem.n <= 2 and problem.T <= 4 and lower is not None:
        step = 1e-2 if problem.n == 1 else 5e-2
        tables = brute_force_dp(problem, state_step=step,
                                control_step=1e-3 if problem.m == 1 else 2e-2)
        eps = 5e-2
        ok = True
        worst = 0.0
        for t in range(problem.T + 1):
            axes = tables[t].axes
            if problem.n == 1:
                X = axes[0][::5][:, None]
            else:
                g0, g1 = np.meshgrid(axes[0][::5], axes[1][::5], indexing="ij")
                X = np.column_stack([g0.ravel(), g1.ravel()])
            vg = np.array([tables[t].value(x) for x in X])
            louts = lower.envelopes[t].values(X)
            Xu = np.column_stack([X, np.ones(len(X))]) if upper.dim == problem.n + 1 else X
            uouts = upper.envelopes[t].values(Xu)
            low_excess = float(np.max(louts - vg))
            up_deficit = float(np.max(vg - uouts))
            worst = max(worst, low_excess, up_deficit)
            ok = ok and low_excess <= eps and up_deficit <= eps
        results.append(("sandwich/brute-force", ok, f"max excess {worst:.2e}"))
    return results


def cmd_verify(args, parser):
    if args.iters < 1:
        parser.error("--iters must be at least 1")
    seed = _resolve_seed(args.seed)
    try:
        problem = load_problem(args.problem)
    except (OSError, ValueError) as e:
        print(f"cannot load problem: {e}", file=sys.stderr)
        return 1
    results = run_verify_suites(problem, args.iters, args.N, seed,
                                samples=args.samples, inject_fault=args.inject_fault)
    width = max(len(name) for name, _, _ in results)
    failed = 0
    for name, ok, detail in results:
        status = "PASS" if ok else "FAIL"
        failed += 0 if ok else 1
        print(f"{name:<{width}}  {status}  {detail}")
    return 0 if failed == 0 else 1


def build_parser():
    parser = argparse.ArgumentParser(
        prog="tdp",
        description="Monotone lower/upper bounds on multistage linear-quadratic "
                    "value functions")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run bound experiments and write artifacts")
    run.add_argument("--problem", required=True, help="problem JSON file")
    run.add_argument("--mode", choices=["sddp", "minplus", "both"], default="both")
    run.add_argument("--iters", type=int, default=40, help="iteration budget K")
    run.add_argument("--N", type=int, default=5,
                     help="control-interval discretization count")
    run.add_argument("--seed", type=int, default=None,
                     help="RNG seed (falls back to env TDP_SEED, then 0)")
    run.add_argument("--out", default="out", help="output directory")
    run.add_argument("--gap-threshold", type=float, nargs="?",
                     const=GAP_THRESHOLD_DEFAULT, default=None,
                     help="stop when the relative gap at x0 drops below this")
    run.add_argument("--plot", action="store_true", help="write SVG figures")
    run.set_defaults(func=cmd_run)

    ver = sub.add_parser("verify", help="run the invariant suites")
    ver.add_argument("--problem", required=True)
    ver.add_argument("--iters", type=int, default=12)
    ver.add_argument("--N", type=int, default=5)
    ver.add_argument("--seed", type=int, default=None)
    ver.add_argument("--samples", type=int, default=30,
                     help="validity sample points per selection")
    ver.add_argument("--inject-fault", choices=["cut-up"], default=None,
                     help="testing aid: corrupt one cut before the suites")
    ver.set_defaults(func=cmd_verify)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args, parser)


if __name__ == "__main__":
    sys.exit(main())
