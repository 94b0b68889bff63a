import numpy as np
import pytest

from tdp.engine import TdpRun
from tdp.oracle import (FixedSetsOracle, SphereOracle, TrajectoryOracle,
                        optimal_trajectory, seed_rng, sphere_uniform)
from tdp.problem import load_problem
from tdp.selection import SddpSelector
from tdp.bellman import solve_nodal


def test_sphere_norms_dim26():
    rng = seed_rng(42)
    for _ in range(50):
        p = sphere_uniform(rng, 26)
        assert abs(np.linalg.norm(p) - 1.0) <= 1e-12


def test_sphere_dim1_is_sign():
    rng = seed_rng(0)
    vals = {sphere_uniform(rng, 1)[0] for _ in range(20)}
    assert vals <= {1.0, -1.0}
    assert len(vals) == 2


def test_sphere_monte_carlo_mean():
    rng = seed_rng(1)
    pts = sphere_uniform(rng, 3, size=100_000)
    assert np.max(np.abs(pts.mean(axis=0))) < 0.02


def test_same_seed_same_draws():
    a = sphere_uniform(seed_rng(7), 5, size=10)
    b = sphere_uniform(seed_rng(7), 5, size=10)
    assert np.array_equal(a, b)


def test_different_seeds_differ():
    a = sphere_uniform(seed_rng(7), 5, size=10)
    b = sphere_uniform(seed_rng(8), 5, size=10)
    assert not np.array_equal(a, b)


class _StubRun:
    def __init__(self, T, dim, iteration=0):
        self.T, self.dim, self.iteration = T, dim, iteration
        self.envelopes = []


def test_sphere_oracle_draws_per_stage():
    run = _StubRun(T=3, dim=4)
    draw = SphereOracle().draw(run, seed_rng(3))
    assert len(draw.points) == 4
    assert all(abs(np.linalg.norm(p) - 1) <= 1e-12 for p in draw.points)
    assert draw.iteration == 1


def test_fixed_sets_singletons_are_constant():
    zs = [np.array([float(t)]) for t in range(4)]
    oracle = FixedSetsOracle([[z] for z in zs])
    for k in range(3):
        run = _StubRun(T=3, dim=1, iteration=k)
        draw = oracle.draw(run, seed_rng(0))
        assert all(np.array_equal(p, z) for p, z in zip(draw.points, zs))


def test_fixed_sets_round_robin():
    oracle = FixedSetsOracle([[np.array([0.0]), np.array([1.0])]])
    seen = []
    for k in range(4):
        run = _StubRun(T=0, dim=1, iteration=k)
        seen.append(float(oracle.draw(run, seed_rng(0)).points[0][0]))
    assert seen == [0.0, 1.0, 0.0, 1.0]


def test_trajectory_first_draw_repeats_x0(problems_dir):
    toy = load_problem(problems_dir / "toy.json")
    run = TdpRun(SddpSelector(toy), TrajectoryOracle(toy.x0), seed_rng(0))
    draw = run.oracle.draw(run, run.rng)
    assert len(draw.points) == toy.T + 1
    assert all(np.array_equal(p, toy.x0) for p in draw.points)


def test_trajectory_replays_dynamics(problems_dir):
    p = load_problem(problems_dir / "scalar_t3.json")
    run = TdpRun(SddpSelector(p), TrajectoryOracle(p.x0), seed_rng(0))
    for _ in range(4):
        run.step()
    pts = optimal_trajectory(p, run.envelopes, p.x0)
    assert np.array_equal(pts[0], p.x0)
    for t in range(p.T):
        s = p.stage(t)
        sol = solve_nodal(pts[t], s, run.envelopes[t + 1].atoms)
        assert np.allclose(pts[t + 1], s.A @ pts[t] + s.B @ sol.u, atol=1e-12)


def test_trajectory_empty_envelope_is_state_error(problems_dir):
    p = load_problem(problems_dir / "scalar_t3.json")
    run = TdpRun(SddpSelector(p), TrajectoryOracle(p.x0), seed_rng(0))
    with pytest.raises(RuntimeError):
        optimal_trajectory(p, run.envelopes, p.x0)


def test_sphere_hits_fixed_caps():
    # any fixed spherical cap keeps getting hit: empirical frequency of
    # landing within eta of a fixed sphere point stays away from zero
    rng = seed_rng(9)
    for dim in (1, 2, 3):
        target = sphere_uniform(rng, dim)
        eta = 0.5
        draws = sphere_uniform(rng, dim, size=20_000)
        hits = np.sum(np.linalg.norm(draws - target, axis=1) < eta)
        assert hits / 20_000 > 0.005
