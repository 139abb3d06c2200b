"""Trim-primitive MPC for the kinematic unicycle.

The robot x' = (u1 cos x3, u1 sin x3, u2) evolves on R^2 x S1 and is
symmetric under rotations about the origin combined with planar
translations and heading shifts.  Constant controls therefore generate
group orbits (trim primitives), and optimal control over concatenations
of trims reduces to a combinatorial search over trim sequences plus a
small switching-time program per sequence.  This package implements the
group machinery, the trim library, the sequence OCP, the receding
horizon loop built on it, and the supporting verification tools.
"""

from .symmetry import AlgebraElement, GroupElement, State, act, compose, exp, identity, inverse, xi_from
from .robot import ControlValue, PiecewiseControl, flow_const, integrate, vector_field
from .trims import TrimLibrary, TrimPlan, TrimPrimitive, default_library, plan_flow, unit_cost
from .costs import ProblemSpec, StageCost, TrackingCost, shift_problem
from .ocp import GridControlSet, InfeasibleProblem, OcpSolution, feasible_plan, solve, value
from .mpc import MpcConfig, MpcTrace, detect_replanning, finite_time_bound, run
from .verification import (
    check_uniform_effort,
    compute_rstar,
    improve_nonuniform,
    lyapunov_margin,
    simplified_bruteforce,
    simplified_value,
)
from .collocation import CollocationProblem, CollocationSolution, smooth_norm, solve_nlp, transcribe

__version__ = "0.1.0"

__all__ = [
    "AlgebraElement",
    "CollocationProblem",
    "CollocationSolution",
    "ControlValue",
    "GridControlSet",
    "GroupElement",
    "InfeasibleProblem",
    "MpcConfig",
    "MpcTrace",
    "OcpSolution",
    "PiecewiseControl",
    "ProblemSpec",
    "StageCost",
    "State",
    "TrackingCost",
    "TrimLibrary",
    "TrimPlan",
    "TrimPrimitive",
    "act",
    "check_uniform_effort",
    "compose",
    "compute_rstar",
    "default_library",
    "detect_replanning",
    "exp",
    "feasible_plan",
    "finite_time_bound",
    "flow_const",
    "identity",
    "improve_nonuniform",
    "integrate",
    "inverse",
    "lyapunov_margin",
    "plan_flow",
    "run",
    "shift_problem",
    "simplified_bruteforce",
    "simplified_value",
    "smooth_norm",
    "solve",
    "solve_nlp",
    "transcribe",
    "unit_cost",
    "value",
    "vector_field",
    "xi_from",
]
