"""The two concrete Bellman-operator evaluations.

Cut side: pointwise solve of the epigraph subproblem

    min_{u, v, lam}  x'Cx + u'Du + d v^2 + lam
    s.t.             <a_j, A x + B u + v b> + b_j <= lam   for every cut j
                     v in [beta, gamma], u in the optional box

by a dense feasible-point active-set method, returning the optimal value,
the simplex multipliers of the active cuts and the subgradient
2 C x + A' (sum_j mu_j a_j).

Quadratic side: the discrete-time Riccati map on pure quadratic forms,
together with the Loewner-interval recursion that keeps its iterates bounded.
"""

from dataclasses import dataclass

import numpy as np

from .errors import NumericError

PSD_TOL = 1e-9


def eig_extrema(M):
    """Smallest and largest eigenvalue of a symmetric matrix."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("expected a square matrix")
    if np.max(np.abs(M - M.T)) > 1e-8 * (1.0 + np.max(np.abs(M))):
        raise ValueError("matrix is not symmetric")
    w = np.linalg.eigvalsh((M + M.T) / 2.0)
    return float(w[0]), float(w[-1])


def _require_psd(M, what):
    shifted = M + (PSD_TOL + 1e-15) * np.eye(M.shape[0])
    try:
        np.linalg.cholesky(shifted)
    except np.linalg.LinAlgError:
        lmin = float(np.linalg.eigvalsh(M)[0])
        raise ValueError(f"{what} must be PSD (min eigenvalue {lmin:.3e})") from None


def riccati_apply(M, stage, cross_check=False):
    """Image of the pure quadratic form x'Mx under one fixed-switch step.

    Uses the reduced form A'M(I + B D^-1 B'M)^-1 A + C; with `cross_check`
    the textbook form C + A'MA - A'MB(D + B'MB)^-1 B'MA is evaluated too and
    the two must agree to 1e-8.
    """
    M = np.asarray(M, dtype=float)
    _require_psd(M, "riccati input")
    A, B, C, D = stage.A, stage.B, stage.C, stage.D
    K = np.eye(M.shape[0]) + B @ np.linalg.solve(D, B.T) @ M
    out = A.T @ (M @ np.linalg.solve(K, A)) + C
    out = (out + out.T) / 2.0
    if cross_check:
        other = riccati_long(M, stage)
        gap = float(np.max(np.abs(out - other)))
        if gap > 1e-8 * (1.0 + np.max(np.abs(out))):
            raise NumericError(f"riccati forms disagree by {gap:.3e}")
    return out


def riccati_long(M, stage):
    """Unreduced Riccati map; kept as an independent cross-check."""
    M = np.asarray(M, dtype=float)
    A, B, C, D = stage.A, stage.B, stage.C, stage.D
    W = D + B.T @ M @ B
    MBt = M @ B
    out = C + A.T @ M @ A - A.T @ MBt @ np.linalg.solve(W, MBt.T @ A)
    return (out + out.T) / 2.0


def riccati_optimal_control(M, stage, x):
    """Minimizer u of u'Du + f(x,u)'M f(x,u) for the fixed-switch dynamics."""
    M = np.asarray(M, dtype=float)
    _require_psd(M, "riccati input")
    A, B, D = stage.A, stage.B, stage.D
    W = D + B.T @ M @ B
    return -np.linalg.solve(W, B.T @ (M @ (A @ x)))


@dataclass(frozen=True)
class StabilityBounds:
    """Backward caps: quadratics in [0, betas[t] Id] stay there under the maps."""

    alphas: np.ndarray
    betas: np.ndarray


def stability_bounds(sp, alpha_T=None):
    """Backward recursion alpha_t = max_v alpha_{t+1} lmax(A'A) + lmax(C).

    betas is the running maximum from the end, giving a single Loewner interval
    [0, beta_t Id] preserved from the final cost down to stage t.
    """
    if alpha_T is None:
        alpha_T = sp.alpha_T
    for M in sp.final_cost:
        fmax = eig_extrema(M)[1]
        if fmax > alpha_T + PSD_TOL:
            raise ValueError(f"alpha_T {alpha_T} below final-cost eigenvalue {fmax:.3e}")
    T = sp.T
    alphas = np.empty(T + 1)
    alphas[T] = alpha_T
    for t in range(T - 1, -1, -1):
        alphas[t] = max(
            alphas[t + 1] * eig_extrema(s.A.T @ s.A)[1] + eig_extrema(s.C)[1]
            for s in sp.models[t]
        )
    betas = np.empty(T + 1)
    betas[T] = alphas[T]
    for t in range(T - 1, -1, -1):
        betas[t] = max(alphas[t], betas[t + 1])
    return StabilityBounds(alphas=alphas, betas=betas)


@dataclass(frozen=True)
class NodalSolution:
    """Optimal value, controls and dual data of one epigraph subproblem."""

    value: float
    u: np.ndarray
    v: float  # None when the problem has no constrained control
    subgradient: np.ndarray
    multipliers: dict  # active cut index -> simplex weight
    pivots: int


def solve_nodal(x, stage, cuts, interval=None, box=None, max_pivots=None):
    """Solve the cut-envelope Bellman subproblem at x, with exact multipliers.

    `cuts` is a nonempty sequence of AffineCut at the next stage.  Runs a
    primal active-set method on the epigraph variables z = (u, v, lam): every
    iterate stays feasible, the working-set systems are solved by dense
    factorization, and at the optimum the cut multipliers are the simplex
    weights of the active cuts.
    """
    cuts = list(cuts)
    if not cuts:
        raise RuntimeError("nodal solve requires a nonempty cut set")
    x = np.asarray(x, dtype=float)
    A, B, bvec, C, D, d = stage.A, stage.B, stage.b, stage.C, stage.D, stage.d
    m = B.shape[1]
    J = len(cuts)
    slopes = np.stack([c.slope for c in cuts])  # (J, n)
    P = slopes @ B  # (J, m)
    r = slopes @ (A @ x) + np.array([c.intercept for c in cuts])
    has_v = interval is not None
    q = slopes @ bvec if has_v else None
    const = float(x @ C @ x)

    nz = m + (1 if has_v else 0) + 1
    il = nz - 1  # epigraph variable index
    H = np.zeros((nz, nz))
    H[:m, :m] = 2.0 * D
    if has_v:
        H[m, m] = 2.0 * d
    lin = np.zeros(nz)
    lin[il] = 1.0  # objective: z'Hz/2 + lam

    # all constraints as G z <= h; rows 0..J-1 are the cuts
    G_rows = np.zeros((J, nz))
    G_rows[:, :m] = P
    if has_v:
        G_rows[:, m] = q
    G_rows[:, il] = -1.0
    extra = []
    kinds = ["cut"] * J
    if has_v:
        beta, gamma = interval
        row = np.zeros(nz)
        row[m] = 1.0
        extra.append((row, gamma, "v-hi"))
        extra.append((-row, -beta, "v-lo"))
    if box is not None:
        lo, hi = box
        for i in range(m):
            row = np.zeros(nz)
            row[i] = 1.0
            extra.append((row.copy(), hi[i], "u-hi"))
            extra.append((-row, -lo[i], "u-lo"))
    if extra:
        G = np.vstack([G_rows] + [e[0][None, :] for e in extra])
        h = np.concatenate([-r, [e[1] for e in extra]])
        kinds += [e[2] for e in extra]
    else:
        G = G_rows
        h = -r
    n_rows = G.shape[0]

    # feasible start: stage-cost minimizer, epigraph variable at the max cut
    z = np.zeros(nz)
    if box is not None:
        z[:m] = np.clip(z[:m], lo, hi)
    if has_v:
        z[m] = min(max(0.0, interval[0]), interval[1])
    cut_vals = P @ z[:m] + r + (q * z[m] if has_v else 0.0)
    j0 = int(np.argmax(cut_vals))
    z[il] = cut_vals[j0]
    W = [j0]

    if max_pivots is None:
        max_pivots = 100 + 10 * (n_rows + m)
    scale = 1.0 + float(np.max(np.abs(r)))
    step_tol = 1e-11 * scale
    dual_tol = 1e-10 * scale
    pivots = 0
    visited = set()
    bland = False
    mu_w = np.zeros(0)
    while True:
        pivots += 1
        if pivots > max_pivots:
            raise NumericError(
                f"nodal active set did not settle after {max_pivots} pivots "
                f"(working set {len(W)}, cuts {J}, m {m})")
        sig = frozenset(W)
        if sig in visited:
            bland = True
        visited.add(sig)
        nw = len(W)
        K = np.zeros((nz + nw, nz + nw))
        K[:nz, :nz] = H
        K[:nz, nz:] = G[W].T
        K[nz:, :nz] = G[W]
        rhs = np.concatenate([-(H @ z + lin), h[W] - G[W] @ z])
        try:
            sol = np.linalg.solve(K, rhs)
        except np.linalg.LinAlgError:
            raise NumericError("singular working-set system in nodal solve") from None
        p = sol[:nz]
        mu_w = sol[nz:]
        if np.max(np.abs(p)) <= step_tol:
            # optimal for this working set; multipliers decide
            droppable = [a for a in range(nw) if mu_w[a] < -dual_tol]
            cut_rows = [a for a in range(nw) if kinds[W[a]] == "cut"]
            if len(cut_rows) == 1 and cut_rows[0] in droppable:
                droppable.remove(cut_rows[0])  # keep the epigraph pinned
            if not droppable:
                break
            if bland:
                a = min(droppable, key=lambda a: W[a])
            else:
                a = min(droppable, key=lambda a: mu_w[a])
            del W[a]
            continue
        # step length: stop at the first blocking row outside the working set;
        # near-ties keep the lowest row index (ascending scan)
        alpha = 1.0
        blocker = None
        Gp = G @ p
        slack = h - G @ z
        for j in range(n_rows):
            if j in W or Gp[j] <= step_tol:
                continue
            aj = max(slack[j], 0.0) / Gp[j]
            if aj < alpha - 1e-12:
                alpha = aj
                blocker = j
        z = z + alpha * p
        if blocker is not None:
            W.append(blocker)

    u = z[:m]
    v = float(z[m]) if has_v else None
    lam = float(z[il])
    mu = {W[a]: float(mu_w[a]) for a in range(len(W)) if kinds[W[a]] == "cut"}
    s_vec = slopes[list(mu)].T @ np.array(list(mu.values())) if mu else np.zeros_like(x)
    value = const + float(u @ D @ u) + lam
    if has_v:
        value += d * v * v
    subgradient = 2.0 * (C @ x) + A.T @ s_vec
    return NodalSolution(value=float(value), u=u, v=v, subgradient=subgradient,
                         multipliers=mu, pivots=pivots)
