"""Independent oracles used to derive expected values: grid searches only.

Nothing here touches the solver paths under test; the point is that a dumb
enumeration agrees with the clever implementation.
"""

import numpy as np


def nodal_grid_value(x, stage, cuts, u_grid, v_grid=None):
    """Brute-force the epigraph subproblem on a control grid (m = 1 only)."""
    x = np.asarray(x, dtype=float)
    u_grid = np.asarray(u_grid, dtype=float)
    Ax = stage.A @ x
    base_cost = float(x @ stage.C @ x)
    D = float(stage.D[0, 0])
    best = np.inf
    vs = [None] if v_grid is None else v_grid
    for v in vs:
        shift = Ax if v is None else Ax + v * stage.b
        # f(x, u, v) per grid u, one row per state coordinate
        F = shift[None, :] + u_grid[:, None] @ stage.B.T
        lam = np.max(np.stack([F @ c.slope + c.intercept for c in cuts]), axis=0)
        cost = base_cost + D * u_grid**2 + lam
        if v is not None:
            cost = cost + stage.d * v * v
        best = min(best, float(np.min(cost)))
    return best


def dual_simplex_grid(x, stage, cuts, resolution=2001):
    """Maximize the two-cut dual over the mu simplex on a grid (m = 1, no v)."""
    assert len(cuts) == 2
    x = np.asarray(x, dtype=float)
    a = np.stack([c.slope for c in cuts])
    b = np.array([c.intercept for c in cuts])
    D = float(stage.D[0, 0])
    mu1 = np.linspace(0.0, 1.0, resolution)
    mu = np.column_stack([mu1, 1.0 - mu1])
    s = mu @ a  # (resolution, n)
    p = s @ stage.B[:, 0]
    inner = -p * p / (4.0 * D)  # inner min over u of D u^2 + p u
    vals = float(x @ stage.C @ x) + s @ (stage.A @ x) + mu @ b + inner
    return float(np.max(vals))


def riccati_grid_value(M, stage, x, u_grids):
    """min over a control grid of u'Du + f(x,u)'M f(x,u), plus the state cost."""
    x = np.asarray(x, dtype=float)
    M = np.asarray(M, dtype=float)
    Ax = stage.A @ x
    best = np.inf
    m = stage.B.shape[1]
    if m == 1:
        # evaluate the objective on the line f = Ax + u b by its exact
        # expansion in u; same values as the naive per-point computation
        us = u_grids[0]
        b1 = stage.B[:, 0]
        c0 = float(Ax @ M @ Ax)
        c1 = 2.0 * float(b1 @ M @ Ax)
        c2 = float(b1 @ M @ b1)
        cost = stage.D[0, 0] * us**2 + (c0 + c1 * us + c2 * us**2)
        best = float(np.min(cost))
    else:
        grids = np.meshgrid(*u_grids, indexing="ij")
        U = np.column_stack([g.ravel() for g in grids])
        F = Ax[None, :] + U @ stage.B.T
        cost = np.einsum("pi,ij,pj->p", U, stage.D, U) + np.einsum("pi,ij,pj->p", F, M, F)
        best = float(np.min(cost))
    return float(x @ stage.C @ x) + best


def random_psd(rng, dim, max_eig):
    """Random symmetric PSD matrix with eigenvalues in [0, max_eig]."""
    Q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    w = rng.uniform(0.0, max_eig, size=dim)
    return (Q * w) @ Q.T
