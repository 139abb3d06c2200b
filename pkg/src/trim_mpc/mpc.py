"""Receding horizon control on top of the trim-sequence OCP.

Each step solves the OCP from the current state, applies the head of the
optimal plan for delta seconds (or until the plan ends, if sooner),
advances the state in closed form, and repeats until the target is
reached within stop_tol or max_steps elapses.  The previous plan's
unexecuted tail warm-starts the next solve and, when it remains
feasible, upper-bounds the search.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Optional

from .costs import ProblemSpec, StageCost
from .ocp import (
    ENDPOINT_TOL,
    OcpSolution,
    _integral_prefix,
    _rate,
    solve,
)
from .robot import ControlValue
from .symmetry import State, wrap_angle
from .trims import REST_ID, TrimPlan, TrimPrimitive, plan_flow

__all__ = [
    "MpcConfig",
    "MpcStep",
    "MpcTrace",
    "detect_replanning",
    "finite_time_bound",
    "run",
]

_REST = TrimPrimitive(REST_ID, ControlValue(0.0, 0.0), name="rest")


@dataclass(frozen=True)
class MpcConfig:
    """Loop parameters: sampling period, stop test, step cap, solver seed."""

    delta: float
    stop_tol: float = 1e-6
    max_steps: int = 200
    seed: int = 0
    threads: Optional[int] = None

    def __post_init__(self) -> None:
        if not (self.delta > 0.0 and math.isfinite(self.delta)):
            raise ValueError(f"delta must be > 0, got {self.delta!r}")
        if self.stop_tol <= 0.0:
            raise ValueError(f"stop_tol must be > 0, got {self.stop_tol!r}")
        if self.max_steps < 1:
            raise ValueError(f"max_steps must be >= 1, got {self.max_steps}")


@dataclass(frozen=True)
class MpcStep:
    """One closed-loop step: state, fresh solve, and the applied slice."""

    index: int
    t: float
    state: State
    value: float
    plan: TrimPlan
    applied: tuple[tuple[TrimPrimitive, float], ...]
    control: ControlValue  # u*(0), the control active at the step start
    step_duration: float
    step_cost: float
    cumulative_cost: float
    replanned: bool


@dataclass
class MpcTrace:
    """Closed-loop record; the last step is the terminal state (no motion)."""

    steps: list[MpcStep] = field(default_factory=list)
    converged: bool = False

    @property
    def terminated(self) -> str:
        return "converged" if self.converged else "stalled"

    @property
    def final_state(self) -> State:
        return self.steps[-1].state

    @property
    def total_cost(self) -> float:
        return self.steps[-1].cumulative_cost

    def values(self) -> list[float]:
        return [s.value for s in self.steps]

    def replanning_steps(self) -> list[int]:
        return [s.index for s in self.steps if s.replanned]


def _distance_to(x: State, target: State) -> float:
    return math.sqrt(
        (x.x1 - target.x1) ** 2
        + (x.x2 - target.x2) ** 2
        + wrap_angle(x.x3 - target.x3) ** 2
    )


def _prefix_segments(
    plan: TrimPlan, dt: float
) -> tuple[tuple[TrimPrimitive, float], ...]:
    out: list[tuple[TrimPrimitive, float]] = []
    left = dt
    for prim, tau in plan.segments:
        if left <= 0.0:
            break
        take = min(tau, left)
        if take > 0.0:
            out.append((prim, take))
        left -= take
    return tuple(out)


def _plans_equal(a: TrimPlan, b: TrimPlan, tol: float) -> bool:
    sa = a.segments
    sb = b.segments
    if len(sa) != len(sb):
        return False
    return all(
        pa.trim_id == pb.trim_id and abs(ta - tb) <= tol
        for (pa, ta), (pb, tb) in zip(sa, sb)
    )


def _plan_of(obj) -> TrimPlan:
    return obj.plan if hasattr(obj, "plan") else obj


def detect_replanning(
    previous,
    applied_duration: float,
    current,
    tol: float = 1e-6,
) -> bool:
    """Did the controller abandon the unexecuted tail of the old plan?

    previous/current may be plans or solutions carrying a .plan.  The
    tail of the previous plan after applied_duration is compared with the
    new plan; trailing rest padding is ignored on both sides and segment
    durations match within tol.
    """
    tail = _plan_of(previous).tail_after(applied_duration)
    old = tail.canonical().strip_trailing_rest()
    new = _plan_of(current).canonical().strip_trailing_rest()
    if not old.segments and not new.segments:
        return False
    return not _plans_equal(old, new, tol)


def _terminal_solution(problem: ProblemSpec) -> OcpSolution:
    """Optimal plan at the target: rest (any admissible plan costs at
    least duration * rate(0), and rest attains it while staying put)."""
    horizon = problem.horizon
    duration = horizon if horizon is not None else 0.0
    plan = TrimPlan(((_REST, duration),))
    val = duration * _rate(problem.cost, ControlValue(0.0, 0.0))
    return OcpSolution(
        plan=plan,
        value=val,
        t_star=float(duration),
        sequence=(REST_ID,),
        sequence_rank=-1,
    )


def run(problem: ProblemSpec, config: MpcConfig) -> MpcTrace:
    """Closed-loop receding horizon control from problem.x_hat.

    The returned trace has one entry per solve; entry i holds the state
    at time i * delta (possibly earlier for the terminal entry), the
    open-loop value, and the control slice applied over the step.  The
    terminal entry applies no control.
    """
    if not isinstance(problem.cost, StageCost):
        raise TypeError("receding horizon control needs a control-only cost")
    trace = MpcTrace()
    x = problem.x_hat
    t = 0.0
    cumulative = 0.0
    prev_plan: Optional[TrimPlan] = None
    prev_applied = 0.0

    for index in range(config.max_steps + 1):
        at_target = _distance_to(x, problem.x_star) <= config.stop_tol
        if at_target:
            sol = _terminal_solution(problem)
        else:
            hint = None
            if prev_plan is not None:
                hint = prev_plan.tail_after(prev_applied)
                if problem.horizon is not None:
                    # Pad with rest so the hint fills the fixed horizon;
                    # feasible by construction, so it bounds the search.
                    pad = problem.horizon - hint.duration
                    if pad > 0.0:
                        hint = TrimPlan(hint.segments + ((_REST, pad),))
            sol = solve(
                dataclasses.replace(problem, x_hat=x),
                delta=config.delta,
                threads=config.threads,
                seed=config.seed,
                hint_plan=hint,
            )
        replanned = (
            prev_plan is not None
            and not at_target
            and detect_replanning(prev_plan, prev_applied, sol.plan)
        )
        if at_target or index == config.max_steps:
            trace.steps.append(
                MpcStep(
                    index=index,
                    t=t,
                    state=x,
                    value=sol.value,
                    plan=sol.plan,
                    applied=(),
                    control=ControlValue(0.0, 0.0),
                    step_duration=0.0,
                    step_cost=0.0,
                    cumulative_cost=cumulative,
                    replanned=replanned,
                )
            )
            trace.converged = at_target
            return trace

        step_duration = min(config.delta, sol.t_star)
        if step_duration <= 0.0:
            # Free-time plan of zero length away from the target cannot
            # make progress; report and stop rather than loop forever.
            trace.steps.append(
                MpcStep(
                    index=index,
                    t=t,
                    state=x,
                    value=sol.value,
                    plan=sol.plan,
                    applied=(),
                    control=ControlValue(0.0, 0.0),
                    step_duration=0.0,
                    step_cost=0.0,
                    cumulative_cost=cumulative,
                    replanned=replanned,
                )
            )
            trace.converged = False
            return trace

        applied = _prefix_segments(sol.plan, step_duration)
        step_cost = _integral_prefix(sol.plan, problem.cost, step_duration)
        cumulative += step_cost
        trace.steps.append(
            MpcStep(
                index=index,
                t=t,
                state=x,
                value=sol.value,
                plan=sol.plan,
                applied=applied,
                control=applied[0][0].u if applied else ControlValue(0.0, 0.0),
                step_duration=step_duration,
                step_cost=step_cost,
                cumulative_cost=cumulative,
                replanned=replanned,
            )
        )
        x = plan_flow(x, sol.plan).state(step_duration)
        t += step_duration
        prev_plan = sol.plan
        prev_applied = step_duration

    return trace


@dataclass(frozen=True)
class BoundReport:
    """Outcome of the decrease/step-count check on a closed-loop trace."""

    holds: bool
    max_violation: float
    step_bound: int
    realized_steps: int


def finite_time_bound(
    trace: MpcTrace, c3: float, delta: float, tol: float = 1e-6
) -> BoundReport:
    """Telescoped decrease check V(x_k) <= V(x_0) - i * delta * c3, with
    i the number of full-length steps before entry k, plus the implied
    step-count bound ceil(V(x_0) / (delta c3)).

    A partial step (shorter than delta: the plan ended inside the
    sampling interval) contributes progress but not a full delta * c3
    decrement, so it advances the entry index without advancing i.
    """
    if c3 <= 0.0:
        raise ValueError("the step-count bound needs c3 > 0")
    steps = trace.steps
    max_violation = -math.inf
    v0 = steps[0].value if steps else 0.0
    full = 0
    realized = 0
    for k, rec in enumerate(steps):
        if k > 0:
            max_violation = max(
                max_violation, rec.value - (v0 - full * delta * c3)
            )
        if rec.step_duration > 0.0:
            realized += 1
        if rec.step_duration >= delta - 1e-12:
            full += 1
    if max_violation == -math.inf:
        max_violation = 0.0
    bound = math.ceil(v0 / (delta * c3) - 1e-12)
    holds = max_violation <= tol and realized <= bound
    return BoundReport(
        holds=holds,
        max_violation=max_violation,
        step_bound=bound,
        realized_steps=realized,
    )
