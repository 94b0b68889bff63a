import numpy as np
import pytest

from helpers import random_psd
from tdp.bellman import riccati_apply, solve_nodal
from tdp.core import AffineCut, Envelope, Opt, PureQuadratic
from tdp.problem import StageModel, SwitchedProblem, SwitchStage
from tdp.selection import (MinPlusSelector, SddpSelector, SelectionOutcome,
                           select_final, select_minplus, select_sddp,
                           verify_tight_valid)


def scalar_stage(A=1.0, B=1.0, C=1.0, D=1.0):
    return StageModel(A=[[A]], B=[[B]], b=[0.0], C=[[C]], D=[[D]], d=0.0)


# --------------------------------------------------------------- select_final

def test_final_single_matrix_minplus():
    rng = np.random.default_rng(0)
    M = random_psd(rng, 3, 2.0)
    for x in rng.standard_normal((5, 3)):
        out = select_final((M,), x, Opt.INF)
        assert np.array_equal(out.atom.matrix, (M + M.T) / 2)


def test_final_picks_smaller_quadratic():
    out = select_final((np.eye(2), 2 * np.eye(2)), np.array([0.3, -1.0]), Opt.INF)
    assert out.source_index == 0


def test_final_tangent_cut():
    out = select_final((np.eye(2),), np.array([1.0, 0.0]), Opt.SUP)
    cut = out.atom
    # cut(x') = 2 x'_1 - 1; tight at x with psi(x) = 1
    assert np.allclose(cut.slope, [2.0, 0.0])
    assert cut.intercept == pytest.approx(-1.0, abs=1e-12)
    assert cut(np.array([1.0, 0.0])) == pytest.approx(1.0, abs=1e-12)


def test_final_tangent_is_valid_below():
    rng = np.random.default_rng(1)
    M = random_psd(rng, 3, 2.0)
    x = rng.standard_normal(3)
    out = select_final((M,), x, Opt.SUP)
    for y in rng.standard_normal((100, 3)):
        assert out.atom(y) <= y @ M @ y + 1e-8


# ---------------------------------------------------------------- select_sddp

def test_sddp_cut_from_scalar_nodal():
    env = Envelope(Opt.SUP, 1, stage=1)
    env.append(AffineCut(slope=[2.0], intercept=0.0, stage=1))
    out = select_sddp(env, np.array([1.0]), scalar_stage(), t=0)
    # nodal solution: value 2, subgradient 4 -> cut(x') = 4 (x' - 1) + 2
    assert out.bellman_value == pytest.approx(2.0, abs=1e-12)
    assert out.atom.slope[0] == pytest.approx(4.0, abs=1e-12)
    assert out.atom(np.array([1.0])) == pytest.approx(2.0, abs=1e-12)
    assert out.atom(np.array([0.0])) == pytest.approx(-2.0, abs=1e-12)


def test_sddp_cut_validity_sampled():
    rng = np.random.default_rng(2)
    n, m = 2, 1
    stage = StageModel(A=rng.standard_normal((n, n)), B=rng.standard_normal((n, m)),
                       b=np.zeros(n), C=random_psd(rng, n, 1.0), D=np.eye(m), d=0.0)
    env = Envelope(Opt.SUP, n, stage=1)
    for _ in range(4):
        env.append(AffineCut(slope=rng.standard_normal(n), intercept=rng.standard_normal(),
                             stage=1))
    x = rng.standard_normal(n)
    out = select_sddp(env, x, stage, t=0)
    for y in rng.standard_normal((100, n)):
        bell = solve_nodal(y, stage, env.atoms).value
        assert out.atom(y) <= bell + 1e-8


# ------------------------------------------------------------- select_minplus

def frozen_switched(matrices_by_switch, n, final=None):
    """Single-stage switched problem with A=I, B=0, C=0: images equal inputs."""
    models = (tuple(SwitchStage(A=np.eye(n), B=np.zeros((n, 1)), C=np.zeros((n, n)),
                                D=np.eye(1)) for _ in matrices_by_switch),)
    return SwitchedProblem(T=1, n=n, m=1, switches=tuple(range(len(matrices_by_switch))),
                           models=models, final_cost=final or (np.eye(n),), alpha_T=1.0)


def test_minplus_singleton_is_riccati_image():
    rng = np.random.default_rng(3)
    st = SwitchStage(A=rng.standard_normal((2, 2)), B=rng.standard_normal((2, 1)),
                     C=random_psd(rng, 2, 1.0), D=np.eye(1))
    sp = SwitchedProblem(T=1, n=2, m=1, switches=(0.0,), models=((st,),),
                         final_cost=(np.eye(2),), alpha_T=1.0)
    env = Envelope(Opt.INF, 2, stage=1)
    q = PureQuadratic(random_psd(rng, 2, 1.0), stage=1)
    env.append(q)
    out = select_minplus(env, np.array([0.5, -1.0]), sp.models[0], sp.switches, t=0)
    assert np.allclose(out.atom.matrix, riccati_apply(q.matrix, st), atol=1e-12)
    assert out.source_index == 0 and out.switch == 0.0


def test_minplus_picks_smaller_image():
    # with A=I, B=0, C=0 the images are the atoms themselves
    sp = frozen_switched([None], 2)
    env = Envelope(Opt.INF, 2, stage=1)
    env.append(PureQuadratic(np.diag([1.0, 5.0]), stage=1))
    env.append(PureQuadratic(np.diag([4.0, 1.0]), stage=1))
    out = select_minplus(env, np.array([0.0, 1.0]), sp.models[0], sp.switches, t=0)
    assert out.source_index == 1
    assert out.bellman_value == pytest.approx(1.0, abs=1e-12)


def test_minplus_tie_rule():
    sp = frozen_switched([None, None], 2)  # two switches, identical models
    env = Envelope(Opt.INF, 2, stage=1)
    env.append(PureQuadratic(np.eye(2), stage=1))
    env.append(PureQuadratic(np.eye(2), stage=1))  # exact tie everywhere
    out = select_minplus(env, np.array([1.0, 0.0]), sp.models[0], sp.switches, t=0)
    assert out.switch == 0 and out.source_index == 0


def test_minplus_selector_memoizes():
    rng = np.random.default_rng(4)
    models = (tuple(SwitchStage(A=rng.standard_normal((2, 2)), B=rng.standard_normal((2, 1)),
                                C=random_psd(rng, 2, 0.5), D=np.eye(1)) for _ in range(3)),)
    sp = SwitchedProblem(T=1, n=2, m=1, switches=(0.0, 1.0, 2.0), models=models,
                         final_cost=(np.eye(2),), alpha_T=1.0)
    sel = MinPlusSelector(sp)
    env = Envelope(Opt.INF, 2, stage=1)
    env.append(PureQuadratic(random_psd(rng, 2, 1.0), stage=1))
    env.append(PureQuadratic(random_psd(rng, 2, 1.0), stage=1))
    sel.select(0, env, np.array([1.0, 0.0]))
    assert len(sel._images) == 6
    first = sel.image(0, env, 0, 0)
    sel.select(0, env, np.array([0.0, 1.0]))
    assert len(sel._images) == 6  # nothing recomputed
    assert sel.image(0, env, 0, 0) is first


def test_minplus_matches_selector():
    rng = np.random.default_rng(5)
    models = (tuple(SwitchStage(A=rng.standard_normal((2, 2)), B=rng.standard_normal((2, 1)),
                                C=random_psd(rng, 2, 0.5), D=np.eye(1)) for _ in range(2)),)
    sp = SwitchedProblem(T=1, n=2, m=1, switches=(0.0, 1.0), models=models,
                         final_cost=(np.eye(2),), alpha_T=1.0)
    sel = MinPlusSelector(sp)
    env = Envelope(Opt.INF, 2, stage=1)
    for _ in range(3):
        env.append(PureQuadratic(random_psd(rng, 2, 1.0), stage=1))
    x = rng.standard_normal(2)
    a = sel.select(0, env, x)
    b = select_minplus(env, x, sp.models[0], sp.switches, t=0)
    assert np.array_equal(a.atom.matrix, b.atom.matrix)
    assert a.bellman_value == pytest.approx(b.bellman_value, rel=1e-12)


def test_minplus_min_additivity_on_scalar_instance():
    # Bellman image of the envelope equals the pairwise min of the images,
    # cross-checked by a control-grid brute force
    st = SwitchStage(A=[[0.8]], B=[[1.0]], C=[[0.4]], D=[[1.0]])
    sp = SwitchedProblem(T=1, n=1, m=1, switches=(0.0,), models=((st,),),
                         final_cost=(np.eye(1),), alpha_T=1.0)
    q1, q2 = PureQuadratic([[0.5]], stage=1), PureQuadratic([[2.0]], stage=1)
    env = Envelope(Opt.INF, 1, stage=1)
    env.append(q1)
    env.append(q2)
    sel = MinPlusSelector(sp)
    us = np.arange(-6, 6, 1e-4)
    for x in ([0.7], [-1.3], [2.0]):
        x = np.array(x)
        pairwise = sel.bellman_value(0, env, x)
        f = 0.8 * x[0] + us
        brute = 0.4 * x[0] ** 2 + np.min(us**2 + np.minimum(0.5 * f**2, 2.0 * f**2))
        assert pairwise == pytest.approx(brute, abs=1e-6)


# ----------------------------------------------------------- verify_tight_valid

def test_verify_clean_sddp_selection():
    rng = np.random.default_rng(6)
    stage = scalar_stage()
    env = Envelope(Opt.SUP, 1, stage=1)
    env.append(AffineCut(slope=[2.0], intercept=0.0, stage=1))
    env.append(AffineCut(slope=[-1.0], intercept=0.5, stage=1))
    out = select_sddp(env, np.array([1.0]), stage, t=0)
    bellman_at = lambda y: solve_nodal(y, stage, env.atoms).value
    audit = verify_tight_valid(out, bellman_at, rng.standard_normal((100, 1)))
    assert audit.tight_residual <= 1e-8
    assert audit.max_violation <= 1e-8
    assert audit.samples == 100


def test_verify_detects_corrupted_cut():
    rng = np.random.default_rng(7)
    stage = scalar_stage()
    env = Envelope(Opt.SUP, 1, stage=1)
    env.append(AffineCut(slope=[2.0], intercept=0.0, stage=1))
    out = select_sddp(env, np.array([1.0]), stage, t=0)
    bad = SelectionOutcome(atom=AffineCut(out.atom.slope, out.atom.intercept + 1.0),
                           trial_point=out.trial_point, bellman_value=out.bellman_value)
    bellman_at = lambda y: solve_nodal(y, stage, env.atoms).value
    audit = verify_tight_valid(bad, bellman_at, rng.standard_normal((50, 1)))
    assert audit.tight_residual == pytest.approx(1.0, abs=1e-9)
    assert audit.max_violation > 0.9  # the +1 shift surfaces as a clear excess


def test_verify_clean_minplus_selection():
    rng = np.random.default_rng(8)
    models = (tuple(SwitchStage(A=rng.standard_normal((3, 3)) * 0.5,
                                B=rng.standard_normal((3, 1)),
                                C=random_psd(rng, 3, 0.5), D=np.eye(1))
                    for _ in range(2)),)
    sp = SwitchedProblem(T=1, n=3, m=1, switches=(0.0, 1.0), models=models,
                         final_cost=(np.eye(3),), alpha_T=1.0)
    sel = MinPlusSelector(sp)
    env = Envelope(Opt.INF, 3, stage=1)
    for _ in range(3):
        env.append(PureQuadratic(random_psd(rng, 3, 1.0), stage=1))
    x = rng.standard_normal(3)
    out = sel.select(0, env, x)
    sphere = rng.standard_normal((100, 3))
    sphere /= np.linalg.norm(sphere, axis=1, keepdims=True)
    audit = verify_tight_valid(out, lambda y: sel.bellman_value(0, env, y), list(sphere))
    assert audit.tight_residual <= 1e-8
    assert audit.max_violation <= 1e-8
