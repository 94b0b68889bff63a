"""Problem definition, JSON ingestion, control discretization and homogenization.

A `Problem` describes the constrained stage data

    dynamics  f_t(x, u, v) = A_t x + B_t u + v b_t
    cost      c_t(x, u, v) = x'C_t x + u'D_t u + d_t v^2

with u free (optionally boxed) and v, when present, ranging over a closed
interval.  A `SwitchedProblem` is the discretized, per-switch view used by the
quadratic upper-bound machinery; after homogenization its stage data is linear
in the state and purely quadratic in the cost.
"""

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

PSD_TOL = 1e-9
PD_TOL = 1e-9


def _frozen(a):
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class StageModel:
    """Per-stage matrices; `b`/`d` describe the constrained control, if any."""

    A: np.ndarray
    B: np.ndarray
    b: np.ndarray
    C: np.ndarray
    D: np.ndarray
    d: float

    def __post_init__(self):
        for name in ("A", "B", "b", "C", "D"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        object.__setattr__(self, "d", float(self.d))


@dataclass(frozen=True)
class Problem:
    T: int
    n: int
    m: int
    stages: tuple
    final_cost: tuple
    alpha_T: float
    control_interval: tuple = None
    control_box: tuple = None
    x0: np.ndarray = None
    lipschitz: tuple = None  # optional user-supplied diagnostics, never used for correctness

    def stage(self, t):
        return self.stages[t]


@dataclass(frozen=True)
class SwitchStage:
    """Stage data for one (time, switch) pair with linear dynamics and pure cost."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        for name in ("A", "B", "C", "D"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))


@dataclass(frozen=True)
class SwitchedProblem:
    """Finite-switch problem; `models[t][i]` is the stage data at switch i."""

    T: int
    n: int
    m: int
    switches: tuple
    models: tuple
    final_cost: tuple
    alpha_T: float
    homogenized: bool = False


def eig_range(M):
    w = np.linalg.eigvalsh((M + M.T) / 2.0)
    return float(w[0]), float(w[-1])


def _parse_matrix(entry, shape, field, where):
    if isinstance(entry, dict):
        if "scaledId" in entry:
            if shape[0] != shape[1]:
                raise ValueError(f"{where}: scaledId invalid for non-square field {field}")
            return float(entry["scaledId"]) * np.eye(shape[0])
        if entry.get("ones"):
            return np.ones(shape)
        raise ValueError(f"{where}: unknown matrix shorthand for {field}: {entry}")
    M = np.array(entry, dtype=float)
    if M.shape != shape:
        raise ValueError(f"{where}: field {field} has shape {M.shape}, expected {shape}")
    return M


def _parse_vector(entry, dim, field, where):
    if isinstance(entry, dict):
        if entry.get("ones"):
            return np.ones(dim)
        if "const" in entry:
            return float(entry["const"]) * np.ones(dim)
        raise ValueError(f"{where}: unknown vector shorthand for {field}: {entry}")
    v = np.atleast_1d(np.array(entry, dtype=float))
    if v.shape != (dim,):
        raise ValueError(f"{where}: field {field} has shape {v.shape}, expected ({dim},)")
    return v


def validate_problem(p):
    """Check dimensions and cone constraints; raises ValueError with the offender."""
    if p.T < 1 or p.n < 1 or p.m < 1:
        raise ValueError("T, n, m must be positive")
    if len(p.stages) != p.T:
        raise ValueError(f"expected {p.T} stages, got {len(p.stages)}")
    for t, s in enumerate(p.stages):
        shapes = {"A": (p.n, p.n), "B": (p.n, p.m), "b": (p.n,), "C": (p.n, p.n), "D": (p.m, p.m)}
        for f, shape in shapes.items():
            got = getattr(s, f).shape
            if got != shape:
                raise ValueError(f"stage {t}: field {f} has shape {got}, expected {shape}")
        cmin, _ = eig_range(s.C)
        if cmin < -PSD_TOL:
            raise ValueError(f"stage {t}: C not PSD (min eigenvalue {cmin:.3e})")
        dmin, _ = eig_range(s.D)
        if dmin < PD_TOL:
            raise ValueError(f"stage {t}: D not PD (min eigenvalue {dmin:.3e})")
        if s.d < 0:
            raise ValueError(f"stage {t}: constrained-control weight d is negative")
    for i, M in enumerate(p.final_cost):
        if M.shape != (p.n, p.n):
            raise ValueError(f"final cost {i} has shape {M.shape}, expected ({p.n}, {p.n})")
        fmin, fmax = eig_range(M)
        if fmin < -PSD_TOL:
            raise ValueError(f"final cost {i} not PSD (min eigenvalue {fmin:.3e})")
        if fmax > p.alpha_T + PSD_TOL:
            raise ValueError(f"final cost {i} exceeds alpha_T (max eigenvalue {fmax:.3e} > {p.alpha_T})")
    if p.control_interval is not None:
        beta, gamma = p.control_interval
        if not beta < gamma:
            raise ValueError("control interval must satisfy beta < gamma")
        for t, s in enumerate(p.stages):
            if s.d <= 0:
                raise ValueError(f"stage {t}: constrained control requires d > 0")
    else:
        for t, s in enumerate(p.stages):
            if np.any(s.b != 0):
                raise ValueError(f"stage {t}: nonzero b requires a control_interval")
    if p.control_box is not None:
        lo, hi = p.control_box
        if lo.shape != (p.m,) or hi.shape != (p.m,):
            raise ValueError("control box bounds must have the control dimension")
        if np.any(lo >= hi):
            raise ValueError("control box must satisfy lo < hi")
    if p.x0 is not None and p.x0.shape != (p.n,):
        raise ValueError(f"x0 has shape {p.x0.shape}, expected ({p.n},)")
    return p


def load_problem(path):
    """Load and validate a problem description from a JSON file."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ValueError(f"{path}: not valid JSON ({e})") from e
    where = str(path)
    try:
        T, n, m = int(data["T"]), int(data["n"]), int(data["m"])
    except KeyError as e:
        raise ValueError(f"{where}: missing required field {e}") from e
    stages = []
    for entry in data.get("stages", []):
        stage = StageModel(
            A=_parse_matrix(entry["A"], (n, n), "A", where),
            B=_parse_matrix(entry["B"], (n, m), "B", where),
            b=_parse_vector(entry["b"], n, "b", where),
            C=_parse_matrix(entry["C"], (n, n), "C", where),
            D=_parse_matrix(entry["D"], (m, m), "D", where),
            d=float(entry["d"]),
        )
        stages.extend([stage] * int(entry.get("repeat", 1)))
    final = tuple(_parse_matrix(e, (n, n), "final_cost", where) for e in data["final_cost"])
    interval = data.get("control_interval")
    if interval is not None:
        interval = (float(interval[0]), float(interval[1]))
    box = data.get("control_box")
    if box is not None:
        box = (_parse_vector(box["lo"], m, "control_box.lo", where),
               _parse_vector(box["hi"], m, "control_box.hi", where))
    x0 = data.get("x0")
    if x0 is not None:
        x0 = _frozen(_parse_vector(x0, n, "x0", where))
    lipschitz = data.get("lipschitz")
    if lipschitz is not None:
        lipschitz = tuple(float(v) for v in lipschitz)
    p = Problem(T=T, n=n, m=m, stages=tuple(stages), final_cost=tuple(map(_frozen, final)),
                alpha_T=float(data["alpha_T"]), control_interval=interval, control_box=box,
                x0=x0, lipschitz=lipschitz)
    return validate_problem(p)


def save_problem(p, path):
    """Write a problem back to JSON (full matrices, no shorthands)."""
    data = {
        "T": p.T, "n": p.n, "m": p.m,
        "stages": [
            {"A": s.A.tolist(), "B": s.B.tolist(), "b": s.b.tolist(),
             "C": s.C.tolist(), "D": s.D.tolist(), "d": s.d}
            for s in p.stages
        ],
        "final_cost": [M.tolist() for M in p.final_cost],
        "alpha_T": p.alpha_T,
    }
    if p.control_interval is not None:
        data["control_interval"] = list(p.control_interval)
    if p.control_box is not None:
        data["control_box"] = {"lo": p.control_box[0].tolist(), "hi": p.control_box[1].tolist()}
    if p.x0 is not None:
        data["x0"] = p.x0.tolist()
    if p.lipschitz is not None:
        data["lipschitz"] = list(p.lipschitz)
    Path(path).write_text(json.dumps(data, indent=1))


def discretize_control(interval, N):
    """Evenly spaced switch values beta + i (gamma-beta)/(N-1), i = 0..N-1."""
    beta, gamma = interval
    if not beta < gamma:
        raise ValueError("control interval must satisfy beta < gamma")
    N = int(N)
    if N < 2:
        raise ValueError("discretization needs at least two points")
    return np.linspace(beta, gamma, N)


def homogenize(p, switches):
    """Fold the constrained control into the dynamics by adding one state.

    Per switch value v the new stage data is

        A~ = [[A, v b], [0, 1]]   B~ = [[B], [0]]
        C~ = diag(C, v^2 d)       D~ = D

    and the final cost becomes diag(M, 0).  On the slice y = 1 the new problem
    reproduces the original costs and dynamics exactly.
    """
    switches = tuple(float(v) for v in switches)
    n = p.n
    models = []
    for s in p.stages:
        per_switch = []
        for v in switches:
            At = np.zeros((n + 1, n + 1))
            At[:n, :n] = s.A
            At[:n, n] = v * s.b
            At[n, n] = 1.0
            Bt = np.vstack([s.B, np.zeros((1, p.m))])
            Ct = np.zeros((n + 1, n + 1))
            Ct[:n, :n] = s.C
            Ct[n, n] = v * v * s.d
            per_switch.append(SwitchStage(A=At, B=Bt, C=Ct, D=s.D))
        models.append(tuple(per_switch))
    final = []
    for M in p.final_cost:
        Mt = np.zeros((n + 1, n + 1))
        Mt[:n, :n] = M
        final.append(_frozen(Mt))
    return SwitchedProblem(T=p.T, n=n + 1, m=p.m, switches=switches, models=tuple(models),
                           final_cost=tuple(final), alpha_T=p.alpha_T, homogenized=True)


def pure_switched(p):
    """View an interval-free problem as a single-switch problem, unchanged."""
    if p.control_interval is not None:
        raise ValueError("problem has a control interval; discretize and homogenize instead")
    models = tuple((SwitchStage(A=s.A, B=s.B, C=s.C, D=s.D),) for s in p.stages)
    return SwitchedProblem(T=p.T, n=p.n, m=p.m, switches=(0.0,), models=models,
                           final_cost=p.final_cost, alpha_T=p.alpha_T, homogenized=False)


def upper_model(p, N=None):
    """The switched problem the quadratic upper bound runs on.

    With a control interval: discretize into N switches, then homogenize.
    Without one the problem is already pure and is used as-is.
    """
    if p.control_interval is None:
        return pure_switched(p)
    if N is None:
        raise ValueError("problem has a control interval; a discretization count N is required")
    return homogenize(p, discretize_control(p.control_interval, N))


def slice_point(x, dim):
    """Lift x to the evaluation point of a (possibly homogenized) model.

    Homogenized values at x are read at (x, 1); plain models evaluate at x.
    """
    x = np.asarray(x, dtype=float)
    if x.shape == (dim,):
        return x
    if x.shape == (dim - 1,):
        return np.append(x, 1.0)
    raise ValueError(f"cannot lift point of shape {x.shape} to dimension {dim}")
