"""Main loop and instrumentation: run, replay checks, grid oracle, gap table.

One iteration draws a point per stage, selects a tight-and-valid atom at the
final stage, then walks t = T-1 .. 0 selecting against the already-updated
stage-(t+1) envelope.  Every stage envelope grows by exactly one atom per
iteration, so the prefix of the first k atoms is the envelope after k
iterations; all checks below replay those prefixes.
"""

import logging
import time
from dataclasses import dataclass

import numpy as np

from .core import Envelope, Opt
from .errors import InvariantViolation
from .oracle import sphere_uniform
from .problem import slice_point

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    points: tuple
    selection_values: np.ndarray  # Bellman value the new atom is tight against
    envelope_values: np.ndarray  # envelope value at the trial point, post insertion
    stage_ms: np.ndarray


class TdpRun:
    """Mutable run state: per-stage envelopes, iteration counter, records."""

    def __init__(self, selector, oracle, rng):
        self.selector = selector
        self.oracle = oracle
        self.rng = rng
        self.T = selector.T
        self.dim = selector.dim
        self.kind = selector.kind
        self.envelopes = [Envelope(selector.kind, selector.dim, stage=t)
                          for t in range(self.T + 1)]
        self.iteration = 0
        self.records = []

    @property
    def problem(self):
        return self.selector.problem

    def step(self):
        """One full iteration; returns its IterationRecord."""
        draw = self.oracle.draw(self, self.rng)
        T = self.T
        sel_values = np.empty(T + 1)
        env_values = np.empty(T + 1)
        stage_ms = np.empty(T + 1)
        order = [T] + list(range(T - 1, -1, -1))
        for t in order:
            tic = time.perf_counter()
            if t == T:
                out = self.selector.select_final(draw.points[T])
            else:
                out = self.selector.select(t, self.envelopes[t + 1], draw.points[t])
            self.envelopes[t].append(out.atom)
            sel_values[t] = out.bellman_value
            env_values[t] = self.envelopes[t].value(draw.points[t])
            stage_ms[t] = (time.perf_counter() - tic) * 1e3
            # tightness carries to the envelope: the fresh atom is optimal at x
            scale = 1.0 + abs(sel_values[t])
            if abs(env_values[t] - sel_values[t]) > 1e-7 * scale:
                raise InvariantViolation(
                    f"stage {t}, iteration {self.iteration + 1}: envelope value "
                    f"{env_values[t]!r} != selection value {sel_values[t]!r}")
        self.iteration += 1
        for t, env in enumerate(self.envelopes):
            if len(env) != self.iteration:
                raise InvariantViolation(
                    f"stage {t}: {len(env)} atoms after {self.iteration} iterations")
        record = IterationRecord(iteration=self.iteration, points=draw.points,
                                 selection_values=sel_values, envelope_values=env_values,
                                 stage_ms=stage_ms)
        self.records.append(record)
        return record


def tdp_run(selector, oracle, iterations, rng):
    """Run the loop for a fixed iteration budget; returns the finished run."""
    if iterations < 1:
        raise ValueError("need at least one iteration")
    run = TdpRun(selector, oracle, rng)
    for _ in range(iterations):
        run.step()
    return run


def audit_points(run, per_stage=50, seed=0):
    """Per-stage audit grids: all drawn points plus seeded extra points.

    Extra points follow the run's natural domain: unit sphere for Inf runs,
    standard normals for Sup runs.
    """
    grids = []
    for t in range(run.T + 1):
        drawn = [rec.points[t] for rec in run.records]
        rng = np.random.default_rng([seed, t])
        if run.kind is Opt.INF:
            extra = [sphere_uniform(rng, run.dim) for _ in range(per_stage)]
        else:
            extra = list(rng.standard_normal((per_stage, run.dim)))
        grids.append(np.stack(drawn + extra))
    return grids


@dataclass(frozen=True)
class MonotoneReport:
    monotone_violations: int
    max_violation: float
    replay_mismatches: int
    max_mismatch: float

    @property
    def ok(self):
        return self.monotone_violations == 0 and self.replay_mismatches == 0


def check_monotone(run, points=None, slack=1e-9):
    """Envelope prefixes must tighten monotonically on the audit grid.

    Also replays each iteration's recorded envelope value at its own trial
    point; a mismatch means the stored atoms no longer reproduce the run.
    """
    if points is None:
        points = audit_points(run)
    violations = 0
    worst = 0.0
    for t, grid in enumerate(points):
        mat = run.envelopes[t].atom_values(grid)
        if mat.shape[0] < 2:
            continue
        prefix = run.kind.accumulate(mat)
        step = np.diff(prefix, axis=0)
        bad = step if run.kind is Opt.INF else -step  # tightening means <= 0 here
        worst = max(worst, float(np.max(bad)))
        violations += int(np.sum(bad > slack))
    mismatches = 0
    worst_mismatch = 0.0
    for rec in run.records:
        k = rec.iteration
        for t in range(run.T + 1):
            replayed = run.envelopes[t].value(rec.points[t], upto=k)
            dev = abs(replayed - rec.envelope_values[t])
            if dev > slack * (1.0 + abs(rec.envelope_values[t])):
                mismatches += 1
                worst_mismatch = max(worst_mismatch, dev)
    return MonotoneReport(monotone_violations=violations, max_violation=worst,
                          replay_mismatches=mismatches, max_mismatch=worst_mismatch)


@dataclass(frozen=True)
class TightnessReport:
    max_deviation: float
    checked: int

    def ok(self, tol=1e-7):
        return self.max_deviation <= tol


def check_tight_at_draws(run):
    """Recompute Bellman prefix images at every drawn point and compare.

    At iteration k and stage t the envelope value must equal the Bellman image
    of the stage-(t+1) prefix envelope (the final cost at t = T).
    """
    worst = 0.0
    checked = 0
    for rec in run.records:
        k = rec.iteration
        for t in range(run.T + 1):
            x = rec.points[t]
            if t == run.T:
                ref = run.selector.bellman_value(run.T, None, x)
            else:
                ref = run.selector.bellman_value(t, run.envelopes[t + 1], x, upto=k)
            got = run.envelopes[t].value(x, upto=k)
            worst = max(worst, abs(got - ref))
            checked += 1
    return TightnessReport(max_deviation=worst, checked=checked)


@dataclass(frozen=True)
class GroundTruthTable:
    stage: int
    axes: tuple
    values: np.ndarray
    clamped: int

    def value(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return float(_interp_clamped(self.axes, self.values, x)[0])


def _interp_clamped(axes, values, X):
    """Multilinear interpolation with clamping to the grid box."""
    n = len(axes)
    Xc = np.column_stack([np.clip(X[:, i], axes[i][0], axes[i][-1]) for i in range(n)])
    if n == 1:
        return np.interp(Xc[:, 0], axes[0], values)
    ax0, ax1 = axes
    i0 = np.clip(np.searchsorted(ax0, Xc[:, 0]) - 1, 0, len(ax0) - 2)
    j0 = np.clip(np.searchsorted(ax1, Xc[:, 1]) - 1, 0, len(ax1) - 2)
    tx = (Xc[:, 0] - ax0[i0]) / (ax0[i0 + 1] - ax0[i0])
    ty = (Xc[:, 1] - ax1[j0]) / (ax1[j0 + 1] - ax1[j0])
    v00 = values[i0, j0]
    v10 = values[i0 + 1, j0]
    v01 = values[i0, j0 + 1]
    v11 = values[i0 + 1, j0 + 1]
    return (v00 * (1 - tx) * (1 - ty) + v10 * tx * (1 - ty)
            + v01 * (1 - tx) * ty + v11 * tx * ty)


def _grid(lo, hi, step):
    count = int(round((hi - lo) / step)) + 1
    return np.linspace(lo, hi, count)


def brute_force_dp(problem, state_box=(-2.0, 2.0), state_step=1e-2,
                   control_box=(-2.0, 2.0), control_step=1e-3, v_step=None):
    """Backward induction on a state grid, minimizing over a control grid.

    Desk-scale ground truth: n <= 2 and T <= 4 only.  Off-grid next states are
    interpolated multilinearly and clamped to the grid box (clamps are counted
    and logged).  Returns one table per stage, index 0..T.
    """
    if problem.n > 2 or problem.T > 4:
        raise ValueError("brute force is desk-scale only (n <= 2, T <= 4)")
    n, m = problem.n, problem.m
    axes = tuple(_grid(state_box[0], state_box[1], state_step) for _ in range(n))
    if n == 1:
        X = axes[0][:, None]
    else:
        g0, g1 = np.meshgrid(axes[0], axes[1], indexing="ij")
        X = np.column_stack([g0.ravel(), g1.ravel()])
    u_axis = _grid(control_box[0], control_box[1], control_step)
    if m == 1:
        controls = u_axis[:, None]
    elif m == 2:
        c0, c1 = np.meshgrid(u_axis, u_axis, indexing="ij")
        controls = np.column_stack([c0.ravel(), c1.ravel()])
    else:
        raise ValueError("brute force supports m <= 2")
    if problem.control_interval is not None:
        beta, gamma = problem.control_interval
        v_grid = _grid(beta, gamma, v_step if v_step is not None else control_step)
    else:
        v_grid = None

    shape = tuple(len(a) for a in axes)
    VT = np.min(np.stack([np.einsum("pi,ij,pj->p", X, M, X) for M in problem.final_cost]),
                axis=0)
    tables = [None] * (problem.T + 1)
    tables[problem.T] = GroundTruthTable(stage=problem.T, axes=axes,
                                         values=VT.reshape(shape), clamped=0)
    lows = np.array([a[0] for a in axes])
    highs = np.array([a[-1] for a in axes])
    for t in range(problem.T - 1, -1, -1):
        s = problem.stages[t]
        state_cost = np.einsum("pi,ij,pj->p", X, s.C, X)
        XA = X @ s.A.T
        best = np.full(X.shape[0], np.inf)
        clamped = 0
        moves = [(None, np.zeros(n), 0.0)] if v_grid is None else [
            (v, v * s.b, s.d * v * v) for v in v_grid]
        for _, shift_v, cost_v in moves:
            for u in controls:
                Xn = XA + (s.B @ u + shift_v)
                clamped += int(np.sum(np.any((Xn < lows) | (Xn > highs), axis=1)))
                cont = _interp_clamped(tables[t + 1].axes, tables[t + 1].values, Xn)
                np.minimum(best, state_cost + float(u @ s.D @ u) + cost_v + cont, out=best)
        if clamped:
            log.warning("stage %d: %d next states left the grid box and were clamped",
                        t, clamped)
        tables[t] = GroundTruthTable(stage=t, axes=axes, values=best.reshape(shape),
                                     clamped=clamped)
    return tables


@dataclass(frozen=True)
class GapRow:
    iteration: int
    stage: int
    lower: float
    upper: float
    gap: float


def gap_metrics(lower_run, upper_run, eval_points, check=True):
    """Per-(iteration, stage) bound table at the given evaluation points.

    `eval_points[k-1][t]` is the point for iteration k and stage t, expressed
    in the lower problem's coordinates; upper envelopes of a homogenized model
    are read on the slice (x, 1).  With `check`, a negative gap beyond 1e-6
    raises InvariantViolation.
    """
    rows = []
    K = min(lower_run.iteration, upper_run.iteration, len(eval_points))
    for k in range(1, K + 1):
        for t in range(lower_run.T + 1):
            x = np.asarray(eval_points[k - 1][t], dtype=float)
            lower = lower_run.envelopes[t].value(x, upto=k)
            xu = slice_point(x, upper_run.dim)
            upper = upper_run.envelopes[t].value(xu, upto=k)
            gap = upper - lower
            if check and gap < -1e-6 * (1.0 + abs(upper)):
                raise InvariantViolation(
                    f"negative gap {gap:.3e} at iteration {k}, stage {t}")
            rows.append(GapRow(iteration=k, stage=t, lower=lower, upper=upper, gap=gap))
    return rows
