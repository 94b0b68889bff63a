"""Monotone value-function bounds for multistage linear-quadratic problems.

Lower bounds grow as suprema of affine cuts produced by nodal solves; upper
bounds shrink as infima of pure quadratic forms produced by Riccati steps.
Both sides run the same draw/select/append loop and tighten monotonically at
every point.
"""

__version__ = "0.1.0"

from .core import MINUS_INF, PLUS_INF, AffineCut, Envelope, Opt, PureQuadratic, ext_add
from .errors import InvariantViolation, NumericError, TdpError
from .problem import (Problem, StageModel, SwitchedProblem, SwitchStage,
                      discretize_control, homogenize, load_problem, pure_switched,
                      save_problem, slice_point, upper_model)
from .bellman import (NodalSolution, StabilityBounds, eig_extrema, riccati_apply,
                      riccati_long, riccati_optimal_control, solve_nodal,
                      stability_bounds)
from .selection import (MinPlusSelector, SddpSelector, SelectionOutcome,
                        select_final, select_minplus, select_sddp, verify_tight_valid)
from .oracle import (FixedSetsOracle, SphereOracle, TrajectoryOracle, TrialDraw,
                     optimal_trajectory, seed_rng, sphere_uniform)
from .engine import (GapRow, GroundTruthTable, IterationRecord, TdpRun, audit_points,
                     brute_force_dp, check_monotone, check_tight_at_draws, gap_metrics,
                     tdp_run)
