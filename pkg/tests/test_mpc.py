"""Closed-loop receding horizon control and its decrease bound."""

import dataclasses
import math

import pytest

from trim_mpc.costs import ProblemSpec, StageCost
from trim_mpc.mpc import (
    MpcConfig,
    MpcStep,
    MpcTrace,
    detect_replanning,
    finite_time_bound,
    run,
)
from trim_mpc.ocp import GridControlSet, OcpSolution
from trim_mpc.robot import ControlValue
from trim_mpc.symmetry import State
from trim_mpc.trims import TrimPlan, TrimPrimitive, default_library

ORIGIN = State(0.0, 0.0, 0.0)

REST = TrimPrimitive(1, ControlValue(0.0, 0.0), "rest")
MOVE = TrimPrimitive(2, ControlValue(1.5, 0.0), "move straight")
TURN = TrimPrimitive(5, ControlValue(0.0, 1.0), "turn on the spot")


# ---------------------------------------------------------------------------
# Config


def test_config_validation():
    with pytest.raises(ValueError, match="delta"):
        MpcConfig(delta=0.0)
    with pytest.raises(ValueError, match="max_steps"):
        MpcConfig(delta=0.1, max_steps=0)
    with pytest.raises(ValueError, match="stop_tol"):
        MpcConfig(delta=0.1, stop_tol=0.0)


# ---------------------------------------------------------------------------
# Replanning detection


def test_replanning_shifted_tail_is_not_replanning():
    prev = TrimPlan(((MOVE, 1.0), (TURN, 2.0)))
    cur = TrimPlan(((MOVE, 0.6), (TURN, 2.0)))
    assert not detect_replanning(prev, 0.4, cur)


def test_replanning_changed_plan():
    prev = TrimPlan(((MOVE, 1.0), (TURN, 2.0)))
    cur = TrimPlan(((TURN, 2.6),))
    assert detect_replanning(prev, 0.4, cur)
    cur2 = TrimPlan(((MOVE, 0.6), (TURN, 1.5)))
    assert detect_replanning(prev, 0.4, cur2)


def test_replanning_ignores_rest_padding():
    prev = TrimPlan(((MOVE, 0.5), (REST, 0.5)))
    cur = TrimPlan(((MOVE, 0.4), (REST, 0.6)))
    assert not detect_replanning(prev, 0.1, cur)
    # Fully consumed plan against a rest plan: nothing was abandoned.
    assert not detect_replanning(TrimPlan(((MOVE, 1.0),)), 1.0, TrimPlan(((REST, 1.0),)))


def test_replanning_accepts_solutions():
    prev = OcpSolution(
        plan=TrimPlan(((MOVE, 1.0),)),
        value=1.0,
        t_star=1.0,
        sequence=(2,),
        sequence_rank=0,
    )
    cur = OcpSolution(
        plan=TrimPlan(((MOVE, 0.9),)),
        value=0.9,
        t_star=0.9,
        sequence=(2,),
        sequence_rank=0,
    )
    assert not detect_replanning(prev, 0.1, cur)


# ---------------------------------------------------------------------------
# Closed loop on the straight-line task


def test_straight_line_loop_shape(table1_run):
    trace, _ = table1_run
    assert trace.converged
    assert trace.terminated == "converged"
    # 35 strictly-moving steps plus the terminal entry.
    motion = [s for s in trace.steps if s.step_duration > 0.0]
    assert len(motion) == 35
    last = trace.steps[-1]
    assert last.applied == ()
    assert last.step_duration == 0.0
    assert abs(last.state.x1) <= 1e-6 and abs(last.state.x2) <= 1e-6


def test_straight_line_values_non_increasing(table1_run):
    vals = table1_run[0].values()
    assert all(b <= a + 1e-9 for a, b in zip(vals, vals[1:]))
    assert vals[0] == pytest.approx(4.0, abs=1e-9)
    assert vals[-1] == pytest.approx(0.0, abs=1e-12)


def test_straight_line_cumulative_cost(table1_run):
    trace, _ = table1_run
    assert trace.total_cost == pytest.approx(
        sum(s.step_cost for s in trace.steps), abs=1e-12
    )
    assert trace.total_cost == pytest.approx(2.182, abs=5e-4)


def test_straight_line_replanning_pattern(table1_run):
    # The mean speed changes every sampling instant while the two-level
    # mix is nontrivial, so the early steps all abandon their tails.
    events = table1_run[0].replanning_steps()
    assert events == list(range(1, 26))


def test_controls_are_plan_heads(table1_run):
    for s in table1_run[0].steps:
        if s.applied:
            assert s.control == s.applied[0][0].u
        else:
            assert s.control == ControlValue(0.0, 0.0)


# ---------------------------------------------------------------------------
# Termination


def test_zero_distance_converges_immediately(table1_problem):
    p = dataclasses.replace(table1_problem, x_hat=table1_problem.x_star)
    trace = run(p, MpcConfig(delta=0.1, max_steps=10))
    assert trace.converged
    assert len(trace.steps) == 1
    assert trace.steps[0].applied == ()
    assert trace.total_cost == 0.0
    assert trace.steps[0].value == 0.0


def test_step_cap_stalls(table1_problem):
    trace = run(table1_problem, MpcConfig(delta=0.1, max_steps=3))
    assert not trace.converged
    assert trace.terminated == "stalled"
    assert len(trace.steps) == 4  # 3 motion entries + the capped entry
    assert trace.steps[-1].step_duration == 0.0


def test_loose_stop_tol_converges_early(table1_problem):
    tight = run(table1_problem, MpcConfig(delta=0.1, max_steps=60))
    loose = run(table1_problem, MpcConfig(delta=0.1, max_steps=60, stop_tol=0.5))
    assert loose.converged
    assert len(loose.steps) < len(tight.steps)
    assert abs(loose.final_state.x1) <= 0.5


# ---------------------------------------------------------------------------
# Decrease bound


def _synthetic_trace(values, durations, delta):
    steps = []
    cum = 0.0
    for k, (v, d) in enumerate(zip(values, durations)):
        steps.append(
            MpcStep(
                index=k,
                t=k * delta,
                state=ORIGIN,
                value=v,
                plan=TrimPlan(((REST, 0.0),)),
                applied=(),
                control=ControlValue(0.0, 0.0),
                step_duration=d,
                step_cost=0.0,
                cumulative_cost=cum,
                replanned=False,
            )
        )
    return MpcTrace(steps=steps, converged=True)


def test_finite_time_bound_holds():
    # c3 = 1, delta = 1: each full step must shave off at least 1.
    trace = _synthetic_trace([3.2, 2.1, 1.0, 0.0], [1.0, 1.0, 1.0, 0.0], 1.0)
    report = finite_time_bound(trace, c3=1.0, delta=1.0)
    assert report.holds
    assert report.step_bound == 4
    assert report.realized_steps == 3
    assert report.max_violation <= 0.0


def test_finite_time_bound_partial_step_exempt():
    # The final motion step is shorter than delta; it is counted against
    # the step budget but not charged a full decrement.
    trace = _synthetic_trace([2.0, 1.0, 0.0], [1.0, 0.3, 0.0], 1.0)
    report = finite_time_bound(trace, c3=1.0, delta=1.0)
    assert report.holds
    assert report.realized_steps == 2
    assert report.step_bound == 2


def test_finite_time_bound_violation():
    trace = _synthetic_trace([2.0, 1.5, 0.0], [1.0, 1.0, 0.0], 1.0)
    report = finite_time_bound(trace, c3=1.0, delta=1.0)
    assert not report.holds
    assert report.max_violation == pytest.approx(0.5)
    with pytest.raises(ValueError):
        finite_time_bound(trace, c3=0.0, delta=1.0)


def test_finite_time_bound_step_count():
    # Too many realized steps trip the bound even if values decrease.
    trace = _synthetic_trace(
        [1.0, 0.9, 0.8, 0.0], [0.5, 0.5, 0.5, 0.0], 1.0
    )
    report = finite_time_bound(trace, c3=1.0, delta=1.0)
    assert report.step_bound == 1
    assert report.realized_steps == 3
    assert not report.holds


# ---------------------------------------------------------------------------
# Library task smoke test (kept tiny; the parking case is exercised at
# acceptance scale elsewhere)


def test_turn_task_with_library():
    lib = default_library()
    p = ProblemSpec(
        x_hat=State(0.0, 0.0, -math.pi / 2.0),
        x_star=ORIGIN,
        cost=StageCost(),
        control_set=lib,
        horizon=2.0,
        max_segments=2,
    )
    trace = run(p, MpcConfig(delta=0.5, max_steps=8))
    assert trace.converged
    vals = trace.values()
    assert vals[0] == pytest.approx(math.pi / 2.0, abs=1e-6)
    assert all(b <= a + 1e-9 for a, b in zip(vals, vals[1:]))


def test_tracking_cost_rejected(table1_problem):
    from trim_mpc.costs import TrackingCost

    bad = dataclasses.replace(
        table1_problem,
        cost=TrackingCost(
            Q=((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0)),
            R=((1.0, 0.0), (0.0, 1.0)),
            x_ref=ORIGIN,
            u_ref=ControlValue(0.0, 0.0),
        ),
    )
    with pytest.raises(TypeError):
        run(bad, MpcConfig(delta=0.1))
