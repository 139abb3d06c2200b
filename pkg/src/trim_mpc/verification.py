"""Executable checks of the structural results behind the planner.

Four families: the uniform-effort improvement construction (a strictly
cheaper rebalancing of any two-segment control with unequal R-weighted
effort), the closed-loop Lyapunov decrease margin, the largest
R-ellipsoid inscribed in the control box (r_star), and the fully
actuated surrogate value function with a brute-force upper-bound oracle.
Each named suite returns a small JSON-ready report.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .costs import Matrix2, StageCost, _check_spd2, control_norm
from .robot import ControlValue, PiecewiseControl, flow_piecewise
from .symmetry import State, wrap_angle
from .trims import TrimPlan

__all__ = [
    "ImprovementResult",
    "check_uniform_effort",
    "compute_rstar",
    "improve_nonuniform",
    "lyapunov_margin",
    "run_suite",
    "simplified_bruteforce",
    "simplified_value",
    "SUITES",
]


@dataclass(frozen=True)
class ImprovementResult:
    """A strictly cheaper two-segment control covering the same paths."""

    improved: PiecewiseControl
    old_cost: float
    new_cost: float
    alpha: float
    beta: float
    endpoint_residual: float


def _norm_r(R: Matrix2, u: ControlValue) -> float:
    (a, b), (_, d) = R
    return math.sqrt(a * u.u1 * u.u1 + 2.0 * b * u.u1 * u.u2 + d * u.u2 * u.u2)


def _two_segment_cost(
    segs: Sequence[tuple[ControlValue, float]],
    R: Matrix2,
    c1: float,
    c2: float,
    norm_kind: str,
) -> float:
    return sum(
        tau * (c1 * _norm_r(R, u) ** 2 + c2 * control_norm(u, norm_kind))
        for u, tau in segs
    )


def _endpoint_gap(
    a: PiecewiseControl, b: PiecewiseControl, x0: State
) -> float:
    xa = flow_piecewise(x0, a, a.duration)
    xb = flow_piecewise(x0, b, b.duration)
    return math.sqrt(
        (xa.x1 - xb.x1) ** 2
        + (xa.x2 - xb.x2) ** 2
        + wrap_angle(xa.x3 - xb.x3) ** 2
    )


def improve_nonuniform(
    seg1: tuple[ControlValue, float],
    seg2: tuple[ControlValue, float],
    R: Matrix2 = ((1.0, 0.0), (0.0, 1.0)),
    c1: float = 1.0,
    c2: float = 0.0,
    norm_kind: str = "l2",
    alpha: Optional[float] = None,
) -> Optional[ImprovementResult]:
    """Rebalance two segments with unequal R-effort into a cheaper pair.

    Scaling a constant control by s while dividing its duration by s
    leaves the traversed group element unchanged, so scaling the
    larger-effort segment by alpha < 1 and the other by the matching
    beta > 1 preserves both the endpoint and the total duration while
    strictly reducing the quadratic cost term (the c2 term is invariant
    under the rescaling).  Returns None for uniform effort.  When alpha
    is not given it is searched over the geometric grid {1 - 2**-k},
    keeping the first strict improvement inside the well-definedness
    region, where the shortened segment keeps positive duration.
    """
    _check_spd2(R)
    (u1, t1), (u2, t2) = seg1, seg2
    if t1 <= 0.0 or t2 <= 0.0:
        raise ValueError("both segment durations must be > 0")
    n1, n2 = _norm_r(R, u1), _norm_r(R, u2)
    if abs(n1 - n2) <= 1e-9:
        return None
    # Arrange so segment b is the larger-effort one; alpha scales b.
    if n2 >= n1:
        (ua, ta), (ub, tb), swapped = (u1, t1), (u2, t2), False
    else:
        (ua, ta), (ub, tb), swapped = (u2, t2), (u1, t1), True
    old = _two_segment_cost([seg1, seg2], R, c1, c2, norm_kind)
    old_ctrl = PiecewiseControl((seg1, seg2))

    def attempt(a: float) -> Optional[ImprovementResult]:
        denom = a * ta - (1.0 - a) * tb
        if denom <= 0.0:
            return None  # beta would not stay positive
        beta = a * ta / denom
        new_a = (ControlValue(beta * ua.u1, beta * ua.u2), ta / beta)
        new_b = (ControlValue(a * ub.u1, a * ub.u2), tb / a)
        pair = (new_b, new_a) if swapped else (new_a, new_b)
        new = _two_segment_cost(pair, R, c1, c2, norm_kind)
        if new >= old:
            return None
        ctrl = PiecewiseControl(pair)
        return ImprovementResult(
            improved=ctrl,
            old_cost=old,
            new_cost=new,
            alpha=a,
            beta=beta,
            endpoint_residual=_endpoint_gap(old_ctrl, ctrl, State(0.0, 0.0, 0.0)),
        )

    if alpha is not None:
        if not 0.0 < alpha < 1.0:
            raise ValueError(f"alpha must be in (0, 1), got {alpha!r}")
        if alpha * ta - (1.0 - alpha) * tb <= 0.0:
            raise ValueError(
                f"alpha={alpha!r} is outside the well-definedness region"
            )
        return attempt(alpha)
    for k in range(1, 61):
        out = attempt(1.0 - 0.5**k)
        if out is not None:
            return out
    return None


PlanLike = Union[TrimPlan, PiecewiseControl, Sequence[tuple[ControlValue, float]]]


def _control_segments(plan: PlanLike) -> list[tuple[ControlValue, float]]:
    if isinstance(plan, TrimPlan):
        return [(prim.u, tau) for prim, tau in plan.segments]
    if isinstance(plan, PiecewiseControl):
        return list(plan.segments)
    return [(u, tau) for u, tau in plan]


def check_uniform_effort(
    plan: PlanLike, R: Matrix2 = ((1.0, 0.0), (0.0, 1.0))
) -> float:
    """Spread (max - min) of ||u||_R across positive-duration segments.

    Zero certifies the necessary optimality condition that the weighted
    effort is constant along the plan; on a quantized control set the
    spread is bounded below by the grid granularity instead.
    """
    norms = [
        _norm_r(R, u) for u, tau in _control_segments(plan) if tau > 0.0
    ]
    if not norms:
        return 0.0
    return max(norms) - min(norms)


def simplified_value(x_hat: State, T: float) -> float:
    """Value ||x_hat||^2 / T of the fully actuated surrogate problem
    (x' = w, cost integral ||w||^2, endpoint 0), with the heading taken
    as its wrapped representative in (-pi, pi]."""
    if T <= 0.0:
        raise ValueError(f"T must be > 0, got {T!r}")
    h = wrap_angle(x_hat.x3)
    return (x_hat.x1**2 + x_hat.x2**2 + h * h) / T


def simplified_bruteforce(
    x_hat: State,
    T: float,
    segments: int = 3,
    grid: int = 8,
) -> float:
    """Best piecewise-constant candidate cost for the surrogate problem.

    Every candidate reaches the endpoint exactly, so the result is a
    true upper bound on the surrogate value.  Families searched over
    `segments` equal-length pieces:

    - the constant control w = -x_hat / T (attains the value exactly);
    - per-segment unit directions from an angle grid (azimuth and
      elevation), with the segment magnitudes solved in closed form as
      the least-effort coefficients meeting the displacement: the
      minimum of sum tau_k c_k^2 subject to sum tau_k c_k a_k = b is
      b' A^{-1} b with A = sum tau_k a_k a_k';
    - decoupled heading/position splits on a simplex grid, each axis
      share realized by a constant rate over its segment.
    """
    if segments < 1 or segments > 4:
        raise ValueError("segments must be in 1..4")
    if grid < 2:
        raise ValueError("grid must be >= 2")
    b = np.array([-x_hat.x1, -x_hat.x2, -wrap_angle(x_hat.x3)])
    tau = T / segments
    best = float(b @ b) / T  # constant-control candidate, cost ||b||^2/T

    # Unit directions on the sphere from the angle grid.
    azimuths = [2.0 * math.pi * k / grid for k in range(grid)]
    elevations = [
        -0.5 * math.pi + math.pi * k / (grid - 1) for k in range(grid)
    ]
    dirs = []
    for az in azimuths:
        for el in elevations:
            dirs.append(
                np.array(
                    [
                        math.cos(el) * math.cos(az),
                        math.cos(el) * math.sin(az),
                        math.sin(el),
                    ]
                )
            )
    for combo in itertools.combinations_with_replacement(dirs, segments):
        A = sum(tau * np.outer(a, a) for a in combo)
        try:
            sol = np.linalg.solve(A, b)
        except np.linalg.LinAlgError:
            continue
        if abs(A @ sol - b).max() > 1e-9 * max(1.0, float(abs(b).max())):
            continue  # directions do not span the displacement
        cost = float(b @ sol)
        if cost >= 0.0:
            best = min(best, cost)

    # Decoupled per-axis splits: shares of each axis displacement across
    # the segments from a simplex grid, each share realized at a constant
    # rate over its segment; the heading uses the constant split.
    shares = [
        np.array(w) / grid
        for w in itertools.product(range(grid + 1), repeat=segments)
        if sum(w) == grid
    ]
    for wx in shares:
        cost_x = float(np.sum((wx * b[0]) ** 2) / tau)
        for wy in shares:
            cost_y = float(np.sum((wy * b[1]) ** 2) / tau)
            best = min(best, cost_x + cost_y + b[2] ** 2 / T)
    return best


def lyapunov_margin(
    trace,
    R: Matrix2,
    c1: float,
    T: float,
    delta: float,
    x_star: Optional[State] = None,
) -> list[float]:
    """Per-step decrease margins of the closed loop.

    margin_i = [V(x_i) - V(x_{i+1})] - (lambda_R c1 delta / T^2) ||x_i||^2
    with lambda_R the smallest eigenvalue of R and ||x_i|| the distance
    to the target (wrapped heading).  Nonnegative margins certify the
    decrease inequality.
    """
    lam = StageCost(c1=1.0, R=R).lambda_min()
    target = x_star if x_star is not None else State(0.0, 0.0, 0.0)
    margins = []
    steps = trace.steps
    for i in range(len(steps) - 1):
        x = steps[i].state
        err = (
            (x.x1 - target.x1) ** 2
            + (x.x2 - target.x2) ** 2
            + wrap_angle(x.x3 - target.x3) ** 2
        )
        drop = steps[i].value - steps[i + 1].value
        margins.append(drop - (lam * c1 * delta / (T * T)) * err)
    return margins


def compute_rstar(
    R: Matrix2, bounds: tuple[float, float]
) -> float:
    """Largest level r with {u : ||u||_R^2 <= r} inside the control box.

    Equals the minimum of u' R u over the box boundary; on each facet
    the restriction is a 1-D quadratic minimized in closed form.
    """
    _check_spd2(R)
    ub1, ub2 = bounds
    if ub1 <= 0.0 or ub2 <= 0.0:
        raise ValueError("the control box must contain 0 in its interior")
    (a, b), (_, d) = R

    def quad(u1: float, u2: float) -> float:
        return a * u1 * u1 + 2.0 * b * u1 * u2 + d * u2 * u2

    best = math.inf
    # Facets u1 = +-ub1: minimize over u2 in [-ub2, ub2]; by symmetry of
    # the quadratic both signs give the same minimum.
    vertex = -b * ub1 / d
    for u2 in (max(-ub2, min(ub2, vertex)), -ub2, ub2):
        best = min(best, quad(ub1, u2))
    vertex = -b * ub2 / a
    for u1 in (max(-ub1, min(ub1, vertex)), -ub1, ub1):
        best = min(best, quad(u1, ub2))
    return best


# ---------------------------------------------------------------------------
# Named suites (drive from the CLI; JSON-ready reports)


def _report(name: str, passed: bool, worst: float, witness) -> dict:
    return {
        "check": name,
        "passed": bool(passed),
        "worst_margin": float(worst),
        "witness": witness,
    }


def _suite_group(seed: int) -> dict:
    from . import symmetry as sym

    rng = np.random.default_rng(seed)
    worst = 0.0
    witness = None
    for _ in range(500):
        gs = []
        for _ in range(3):
            th = float(rng.uniform(-math.pi, math.pi))
            gs.append(
                sym.GroupElement(
                    th, float(rng.normal()), float(rng.normal()), th
                )
            )
        g, h, k = gs
        x = State(*rng.normal(size=3))
        lhs = sym.act(sym.compose(g, h), x)
        rhs = sym.act(g, sym.act(h, x))
        res = max(
            abs(lhs.x1 - rhs.x1),
            abs(lhs.x2 - rhs.x2),
            abs(wrap_angle(lhs.x3 - rhs.x3)),
        )
        inv = sym.act(sym.compose(g, sym.inverse(g)), x)
        res = max(
            res,
            abs(inv.x1 - x.x1),
            abs(inv.x2 - x.x2),
            abs(wrap_angle(inv.x3 - x.x3)),
        )
        if res > worst:
            worst = res
            witness = {"g": g.__dict__, "x": x.as_tuple()}
    return _report("group", worst <= 1e-12, worst, witness)


def _suite_equivariance(seed: int) -> dict:
    from .robot import equivariance_residual
    from .symmetry import GroupElement

    rng = np.random.default_rng(seed)
    worst = 0.0
    witness = None
    for _ in range(1000):
        th = float(rng.uniform(-math.pi, math.pi))
        g = GroupElement(th, float(rng.normal()), float(rng.normal()), th)
        x0 = State(*rng.normal(size=3))
        u = ControlValue(float(rng.uniform(-2, 2)), float(rng.uniform(-2, 2)))
        t = float(rng.uniform(0.0, 10.0))
        ctrl = PiecewiseControl(((u, t),))
        res = equivariance_residual(g, x0, ctrl, t)
        if res > worst:
            worst = res
            witness = {
                "g": g.__dict__,
                "x0": x0.as_tuple(),
                "u": u.as_tuple(),
                "t": t,
            }
    return _report("equivariance", worst <= 1e-10, worst, witness)


def _suite_uniform_effort(seed: int) -> dict:
    rng = np.random.default_rng(seed)
    worst = -math.inf
    witness = None
    passed = True
    for _ in range(500):
        u1 = ControlValue(float(rng.uniform(-2, 2)), float(rng.uniform(-2, 2)))
        u2 = ControlValue(float(rng.uniform(-2, 2)), float(rng.uniform(-2, 2)))
        t1 = float(rng.uniform(0.1, 3.0))
        t2 = float(rng.uniform(0.1, 3.0))
        R = ((1.0, 0.0), (0.0, 1.0))
        if abs(_norm_r(R, u1) - _norm_r(R, u2)) <= 1e-6:
            continue
        out = improve_nonuniform((u1, t1), (u2, t2), R=R, c1=1.0, c2=0.0)
        if out is None:
            passed = False
            witness = {"u1": u1.as_tuple(), "u2": u2.as_tuple()}
            break
        gap = out.new_cost - out.old_cost  # must be < 0
        bad = max(gap, out.endpoint_residual - 1e-9)
        if bad > worst:
            worst = bad
            witness = {
                "u1": u1.as_tuple(),
                "u2": u2.as_tuple(),
                "alpha": out.alpha,
            }
        if gap >= 0.0 or out.endpoint_residual > 1e-9:
            passed = False
            break
    if worst == -math.inf:
        worst = 0.0
    return _report("uniform-effort", passed, worst, witness)


def _suite_lyapunov(seed: int) -> dict:
    from .costs import ProblemSpec
    from .mpc import MpcConfig, run
    from .ocp import GridControlSet

    cost = StageCost(c1=1.0, R=((1.0, 0.0), (0.0, 1.0)))
    problem = ProblemSpec(
        State(-2.0, 0.0, 0.0),
        State(0.0, 0.0, 0.0),
        cost,
        GridControlSet(2.0, 0.0, 0.1),
        horizon=1.0,
    )
    trace = run(problem, MpcConfig(delta=0.1, max_steps=50))
    margins = lyapunov_margin(trace, cost.R, 1.0, 1.0, 0.1)
    worst = min(margins) if margins else 0.0
    return _report(
        "lyapunov",
        worst >= -1e-6,
        worst,
        {"step": int(np.argmin(margins))} if margins else None,
    )


def _suite_simplified_value(seed: int) -> dict:
    rng = np.random.default_rng(seed)
    worst = math.inf
    witness = None
    passed = True
    for _ in range(50):
        x = State(
            float(rng.uniform(-3, 3)),
            float(rng.uniform(-3, 3)),
            float(rng.uniform(-math.pi, math.pi)),
        )
        T = float(rng.uniform(0.5, 5.0))
        v = simplified_value(x, T)
        ub = simplified_bruteforce(x, T, segments=3, grid=6)
        margin = ub - v  # >= -1e-3 required; >= 0 expected
        if margin < worst:
            worst = margin
            witness = {"x": x.as_tuple(), "T": T, "value": v, "bruteforce": ub}
        if margin < -1e-3:
            passed = False
    return _report("simplified-value", passed, worst, witness)


def _suite_rstar(seed: int) -> dict:
    rng = np.random.default_rng(seed)
    passed = abs(compute_rstar(((1.0, 0.0), (0.0, 1.0)), (2.0, 2.0)) - 4.0) == 0.0
    worst = 0.0
    witness = None
    for _ in range(3):
        a = float(rng.uniform(0.5, 4.0))
        d = float(rng.uniform(0.5, 4.0))
        b = float(rng.uniform(-0.9, 0.9)) * math.sqrt(a * d)
        R = ((a, b), (b, d))
        bounds = (float(rng.uniform(0.5, 3.0)), float(rng.uniform(0.5, 3.0)))
        r = compute_rstar(R, bounds)
        # Sample the ellipsoid boundary {u'Ru = r (1 - 1e-9)}; all samples
        # must lie inside the box.
        Rm = np.array(R)
        L = np.linalg.cholesky(Rm)
        for k in range(10_000):
            ang = 2.0 * math.pi * k / 10_000
            y = math.sqrt(r * (1.0 - 1e-9)) * np.array(
                [math.cos(ang), math.sin(ang)]
            )
            u = np.linalg.solve(L.T, y)
            gap = max(abs(u[0]) - bounds[0], abs(u[1]) - bounds[1])
            worst = max(worst, gap)
            if gap > 1e-9:
                passed = False
                witness = {"R": R, "bounds": bounds, "u": u.tolist()}
    return _report("rstar", passed, worst, witness)


def _suite_transcription(seed: int) -> dict:
    from .collocation import solve_example

    sol = solve_example()
    target = 0.5141
    rel = abs(sol.objective - target) / target
    return _report(
        "transcription",
        sol.converged and rel <= 0.02,
        rel,
        {"objective": sol.objective, "residual": sol.residual},
    )


SUITES = {
    "group": _suite_group,
    "equivariance": _suite_equivariance,
    "uniform-effort": _suite_uniform_effort,
    "lyapunov": _suite_lyapunov,
    "simplified-value": _suite_simplified_value,
    "rstar": _suite_rstar,
    "transcription": _suite_transcription,
}


def run_suite(name: str, seed: int = 0) -> dict:
    """Run one named verification suite; returns its JSON-ready report."""
    try:
        fn = SUITES[name]
    except KeyError:
        raise ValueError(
            f"unknown suite {name!r}; expected one of {sorted(SUITES)}"
        ) from None
    return fn(seed)
