"""Trial-point oracles: where the selections get evaluated each iteration.

Three kinds: uniform draws on the unit sphere (quadratic upper bounds),
forward simulation along the optimal trajectory of the current lower
envelopes (cut lower bounds), and fixed per-stage point sets cycled
round-robin (tests).
"""

from dataclasses import dataclass

import numpy as np

from .bellman import solve_nodal
from .core import Opt


def seed_rng(seed):
    """Deterministic generator (numpy PCG64); same seed, same run, bit for bit."""
    return np.random.default_rng(int(seed))


def sphere_uniform(rng, dim, size=None):
    """Uniform points on the unit sphere; normalized standard normals."""
    if size is None:
        while True:
            z = rng.standard_normal(dim)
            nrm = np.linalg.norm(z)
            if nrm > 1e-12:  # zero draw has probability zero, guard anyway
                return z / nrm
    pts = np.empty((size, dim))
    for i in range(size):
        pts[i] = sphere_uniform(rng, dim)
    return pts


@dataclass(frozen=True)
class TrialDraw:
    points: tuple  # one point per stage, 0..T
    iteration: int


def optimal_trajectory(problem, envelopes, x0):
    """States visited by the nodal minimizers of the current cut envelopes.

    x_{t+1} = A x_t + B u_t + v_t b with (u_t, v_t) optimal at x_t against the
    stage-(t+1) envelope.  Needs every envelope at stages 1..T nonempty.
    """
    x = np.asarray(x0, dtype=float)
    points = [x]
    for t in range(problem.T):
        env = envelopes[t + 1]
        if len(env) == 0:
            raise RuntimeError(f"trajectory oracle needs a nonempty envelope at stage {t + 1}")
        s = problem.stages[t]
        sol = solve_nodal(x, s, env.atoms, interval=problem.control_interval,
                          box=problem.control_box)
        x = s.A @ x + s.B @ sol.u
        if sol.v is not None:
            x = x + sol.v * s.b
        points.append(x)
    return points


class SphereOracle:
    """Independent uniform sphere points, one per stage."""

    def draw(self, run, rng):
        points = tuple(sphere_uniform(rng, run.dim) for _ in range(run.T + 1))
        return TrialDraw(points=points, iteration=run.iteration + 1)


class TrajectoryOracle:
    """Optimal trajectory of the current lower envelopes, starting at x0.

    The very first draw (all envelopes still empty) repeats x0 at every stage.
    """

    def __init__(self, x0):
        self.x0 = np.asarray(x0, dtype=float)

    def draw(self, run, rng):
        if run.kind is not Opt.SUP:
            raise RuntimeError("the trajectory oracle drives lower (Sup) runs only")
        if all(len(env) == 0 for env in run.envelopes):
            points = tuple(self.x0 for _ in range(run.T + 1))
        else:
            points = tuple(optimal_trajectory(run.problem, run.envelopes, self.x0))
        return TrialDraw(points=points, iteration=run.iteration + 1)


class FixedSetsOracle:
    """Cycles through finite per-stage point sets in round-robin order."""

    def __init__(self, sets):
        self.sets = [[np.asarray(p, dtype=float) for p in pts] for pts in sets]

    def draw(self, run, rng):
        k = run.iteration
        points = tuple(pts[k % len(pts)] for pts in self.sets)
        return TrialDraw(points=points, iteration=k + 1)
