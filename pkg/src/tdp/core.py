"""Basic functions (affine cuts, pure quadratic forms) and their envelopes.

An envelope is a finite family of basic functions read through a pointwise
infimum or supremum.  Envelopes only grow: appending an atom can only pull an
Inf-envelope down or push a Sup-envelope up, which is what makes the bound
sequences monotone.
"""

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

PLUS_INF = math.inf
MINUS_INF = -math.inf


def ext_add(a, b):
    """Extended-real addition with the convention inf + (-inf) = +inf."""
    if a == PLUS_INF or b == PLUS_INF:
        return PLUS_INF
    if a == MINUS_INF or b == MINUS_INF:
        return MINUS_INF
    return a + b


class Opt(Enum):
    """How an envelope reads its atoms: pointwise infimum or supremum."""

    INF = "inf"
    SUP = "sup"

    @property
    def empty_value(self):
        # an empty infimum is +inf, an empty supremum is -inf
        return PLUS_INF if self is Opt.INF else MINUS_INF

    def better(self, a, b):
        """True when value a strictly improves on b for this reading."""
        return a < b if self is Opt.INF else a > b

    def reduce(self, values):
        return np.min(values, axis=0) if self is Opt.INF else np.max(values, axis=0)

    def accumulate(self, values):
        # running optimum along axis 0: row k is the prefix envelope after k+1 atoms
        op = np.minimum if self is Opt.INF else np.maximum
        return op.accumulate(values, axis=0)


def _frozen(a):
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class AffineCut:
    """x -> <slope, x> + intercept, one supporting plane of a lower envelope."""

    slope: np.ndarray
    intercept: float
    stage: int = 0

    def __post_init__(self):
        slope = _frozen(np.atleast_1d(self.slope))
        if slope.ndim != 1 or not np.all(np.isfinite(slope)):
            raise ValueError("cut slope must be a finite vector")
        if not math.isfinite(self.intercept):
            raise ValueError("cut intercept must be finite")
        object.__setattr__(self, "slope", slope)
        object.__setattr__(self, "intercept", float(self.intercept))

    @property
    def dim(self):
        return self.slope.shape[0]

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"expected point of dimension {self.dim}, got shape {x.shape}")
        return float(self.slope @ x + self.intercept)

    def values(self, points):
        """Evaluate on an array of points, one per row."""
        return points @ self.slope + self.intercept


@dataclass(frozen=True)
class PureQuadratic:
    """x -> x^T M x with M symmetric; stored symmetrized, no linear part."""

    matrix: np.ndarray
    stage: int = 0

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        m = np.atleast_2d(m)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("quadratic matrix must be square")
        if not np.all(np.isfinite(m)):
            raise ValueError("quadratic matrix must be finite")
        object.__setattr__(self, "matrix", _frozen((m + m.T) / 2.0))

    @property
    def dim(self):
        return self.matrix.shape[0]

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"expected point of dimension {self.dim}, got shape {x.shape}")
        return float(x @ self.matrix @ x)

    def values(self, points):
        return np.einsum("pi,ij,pj->p", points, self.matrix, points)


class Envelope:
    """Ordered collection of same-kind atoms read as a pointwise optimum.

    Atoms are kept in insertion order, never pruned or deduplicated; the
    prefix of the first k atoms is exactly the envelope after k insertions,
    which is what the replay checks rely on.
    """

    def __init__(self, kind, dim, stage=0):
        self.kind = kind
        self.dim = dim
        self.stage = stage
        self.atoms = []

    def __len__(self):
        return len(self.atoms)

    def append(self, atom):
        if atom.dim != self.dim:
            raise ValueError(f"atom dimension {atom.dim} != envelope dimension {self.dim}")
        if atom.stage != self.stage:
            raise ValueError(f"atom stage {atom.stage} != envelope stage {self.stage}")
        if self.atoms and type(atom) is not type(self.atoms[0]):
            raise ValueError("envelope atoms must share one variant")
        self.atoms.append(atom)

    def _check_point(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"expected point of dimension {self.dim}, got shape {x.shape}")
        return x

    def value(self, x, upto=None):
        """Envelope value at x; +inf (Inf) or -inf (Sup) when empty.

        `upto` restricts evaluation to the first `upto` atoms.
        """
        x = self._check_point(x)
        atoms = self.atoms if upto is None else self.atoms[:upto]
        if not atoms:
            return self.kind.empty_value
        vals = [a(x) for a in atoms]
        return min(vals) if self.kind is Opt.INF else max(vals)

    def argopt(self, x, upto=None):
        """Index and value of the optimal atom at x; ties keep the earliest atom."""
        x = self._check_point(x)
        atoms = self.atoms if upto is None else self.atoms[:upto]
        if not atoms:
            raise RuntimeError("argopt on an empty envelope")
        best_i, best_v = 0, atoms[0](x)
        for i, atom in enumerate(atoms[1:], start=1):
            v = atom(x)
            if self.kind.better(v, best_v):
                best_i, best_v = i, v
        return best_i, best_v

    def atom_values(self, points, upto=None):
        """Matrix of atom evaluations, shape (num_atoms, num_points)."""
        atoms = self.atoms if upto is None else self.atoms[:upto]
        if not atoms:
            return np.empty((0, points.shape[0]))
        return np.stack([a.values(points) for a in atoms])

    def values(self, points, upto=None):
        """Envelope value at each row of `points`."""
        mat = self.atom_values(points, upto)
        if mat.shape[0] == 0:
            return np.full(points.shape[0], self.kind.empty_value)
        return self.kind.reduce(mat)
