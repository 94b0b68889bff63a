"""Atom selection: tight at the trial point, valid as a one-sided bound.

`SddpSelector` produces supporting cuts of the Bellman image of the current
lower envelope via the nodal solve; `MinPlusSelector` produces Riccati images
of the current upper envelope's atoms, picking the pair (atom, switch) that is
smallest at the trial point.  Both selectors expose the same surface so the
main loop does not care which side it is running.
"""

from dataclasses import dataclass

import numpy as np

from .bellman import riccati_apply, solve_nodal
from .core import AffineCut, Envelope, Opt, PureQuadratic


@dataclass(frozen=True)
class SelectionOutcome:
    """One selected atom plus the Bellman value it is tight against."""

    atom: object
    trial_point: np.ndarray
    bellman_value: float
    switch: float = None
    source_index: int = None


def final_cost_value(final_cost, x):
    """Value of the final cost (a finite min of pure quadratics) at x."""
    x = np.asarray(x, dtype=float)
    return min(float(x @ M @ x) for M in final_cost)


def select_final(final_cost, x, kind, stage=0):
    """Tight and valid atom of the final cost at x.

    Inf kind returns the active quadratic piece itself; Sup kind returns the
    tangent cut of the active piece (slope 2 M x).
    """
    if not final_cost:
        raise RuntimeError("empty final cost list")
    x = np.asarray(x, dtype=float)
    vals = [float(x @ M @ x) for M in final_cost]
    i = int(np.argmin(vals))
    if kind is Opt.INF:
        atom = PureQuadratic(final_cost[i], stage=stage)
    else:
        slope = 2.0 * (final_cost[i] @ x)
        atom = AffineCut(slope=slope, intercept=vals[i] - float(slope @ x), stage=stage)
    return SelectionOutcome(atom=atom, trial_point=x, bellman_value=vals[i], source_index=i)


def select_sddp(env_next, x, stage, t, interval=None, box=None):
    """Supporting cut of the Bellman image of a Sup cut-envelope at x."""
    sol = solve_nodal(x, stage, env_next.atoms, interval=interval, box=box)
    x = np.asarray(x, dtype=float)
    cut = AffineCut(slope=sol.subgradient,
                    intercept=sol.value - float(sol.subgradient @ x), stage=t)
    return SelectionOutcome(atom=cut, trial_point=x, bellman_value=sol.value)


def select_minplus(env_next, x, models_t, switches, t):
    """Best Riccati image over (atom, switch) pairs at x; no memoization."""
    if len(env_next) == 0:
        raise RuntimeError("selection from an empty envelope")
    x = np.asarray(x, dtype=float)
    best = None
    for vi, model in enumerate(models_t):
        for ai, atom in enumerate(env_next.atoms):
            img = riccati_apply(atom.matrix, model)
            val = float(x @ img @ x)
            if best is None or val < best[0]:
                best = (val, vi, ai, img)
    val, vi, ai, img = best
    return SelectionOutcome(atom=PureQuadratic(img, stage=t), trial_point=x,
                            bellman_value=val, switch=switches[vi], source_index=ai)


class SddpSelector:
    """Cut selection over a Problem; drives the Sup (lower bound) run."""

    kind = Opt.SUP

    def __init__(self, problem):
        self.problem = problem

    @property
    def T(self):
        return self.problem.T

    @property
    def dim(self):
        return self.problem.n

    def select_final(self, x):
        return select_final(self.problem.final_cost, x, Opt.SUP, stage=self.T)

    def select(self, t, env_next, x):
        p = self.problem
        return select_sddp(env_next, x, p.stages[t], t,
                           interval=p.control_interval, box=p.control_box)

    def bellman_value(self, t, env_next, x, upto=None):
        """Bellman image of the (prefix of the) cut envelope at x."""
        if t == self.T:
            return final_cost_value(self.problem.final_cost, x)
        atoms = env_next.atoms if upto is None else env_next.atoms[:upto]
        p = self.problem
        return solve_nodal(x, p.stages[t], atoms,
                           interval=p.control_interval, box=p.control_box).value


class MinPlusSelector:
    """Riccati-image selection over a SwitchedProblem; drives the Inf run.

    Images are memoized per (stage, atom index, switch index): atoms are
    immutable and appended once, so each image is computed exactly once per
    run and reused by later argmin scans and replay checks.
    """

    kind = Opt.INF

    def __init__(self, switched):
        self.problem = switched
        self._images = {}

    @property
    def T(self):
        return self.problem.T

    @property
    def dim(self):
        return self.problem.n

    def image(self, t, env_next, ai, vi):
        key = (t, ai, vi)
        img = self._images.get(key)
        if img is None:
            img = riccati_apply(env_next.atoms[ai].matrix, self.problem.models[t][vi])
            self._images[key] = img
        return img

    def _scan(self, t, env_next, x, upto=None):
        """Values of all (switch, atom) images at x, switch-major order."""
        na = len(env_next) if upto is None else min(upto, len(env_next))
        if na == 0:
            raise RuntimeError("selection from an empty envelope")
        nv = len(self.problem.switches)
        stack = np.stack([self.image(t, env_next, ai, vi)
                          for vi in range(nv) for ai in range(na)])
        vals = np.einsum("kij,i,j->k", stack, x, x)
        return vals, stack, na

    def select_final(self, x):
        return select_final(self.problem.final_cost, x, Opt.INF, stage=self.T)

    def select(self, t, env_next, x):
        x = np.asarray(x, dtype=float)
        vals, stack, na = self._scan(t, env_next, x)
        k = int(np.argmin(vals))  # first minimum: lowest switch, then lowest atom
        vi, ai = divmod(k, na)
        return SelectionOutcome(atom=PureQuadratic(stack[k], stage=t), trial_point=x,
                                bellman_value=float(vals[k]),
                                switch=self.problem.switches[vi], source_index=ai)

    def bellman_value(self, t, env_next, x, upto=None):
        """Bellman image of the (prefix of the) quadratic envelope at x."""
        if t == self.T:
            return final_cost_value(self.problem.final_cost, x)
        x = np.asarray(x, dtype=float)
        vals, _, _ = self._scan(t, env_next, x, upto=upto)
        return float(np.min(vals))


@dataclass(frozen=True)
class SelectionAudit:
    tight_residual: float
    max_violation: float
    samples: int


def verify_tight_valid(outcome, bellman_at, sample_points):
    """Audit one selection: tightness at the trial point, validity at samples.

    `bellman_at` evaluates the Bellman image of the envelope the selection was
    made against.  Cuts must stay below it, quadratics above; the returned
    max_violation is the worst signed excess (positive means a real violation).
    """
    tight = abs(outcome.atom(outcome.trial_point) - outcome.bellman_value)
    below = isinstance(outcome.atom, AffineCut)
    worst = -np.inf
    count = 0
    for y in sample_points:
        ref = bellman_at(y)
        gap = outcome.atom(y) - ref if below else ref - outcome.atom(y)
        worst = max(worst, gap)
        count += 1
    return SelectionAudit(tight_residual=float(tight), max_violation=float(worst),
                          samples=count)
