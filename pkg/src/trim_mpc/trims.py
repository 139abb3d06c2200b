"""Trim primitives, libraries, and piecewise-trim plans.

A trim primitive is a constant control held for some duration; its
motion is the group orbit act(exp(xi_from(u, x0), t), x0).  A library
is a finite id-keyed set of trims; id 1 is reserved for the rest trim
(0, 0) whenever a rest is present.  Plans concatenate (trim, duration)
segments and evaluate in closed form, so no numerical integration is
involved anywhere in the planning stack.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, TYPE_CHECKING

from .robot import ControlValue, PiecewiseControl
from .symmetry import State, act, exp, xi_from

if TYPE_CHECKING:  # pragma: no cover
    from .costs import StageCost

REST_ID = 1


@dataclass(frozen=True)
class TrimPrimitive:
    """Library entry: integer id, constant control, optional label."""

    trim_id: int
    u: ControlValue
    name: str = ""

    def __post_init__(self) -> None:
        if self.trim_id < 1:
            raise ValueError(f"trim id must be >= 1, got {self.trim_id}")

    @property
    def is_rest(self) -> bool:
        return self.u.u1 == 0.0 and self.u.u2 == 0.0


class TrimLibrary:
    """Finite id-keyed collection of trim primitives.

    Ids must be unique; if a rest trim is present it must carry id 1,
    matching the convention that the zero control is the first library
    entry.
    """

    def __init__(self, trims: Iterable[TrimPrimitive]):
        self._by_id: dict[int, TrimPrimitive] = {}
        for trim in trims:
            if trim.trim_id in self._by_id:
                raise ValueError(f"duplicate trim id {trim.trim_id}")
            self._by_id[trim.trim_id] = trim
        for trim in self._by_id.values():
            if trim.is_rest and trim.trim_id != REST_ID:
                raise ValueError(
                    f"rest trim must have id {REST_ID}, got {trim.trim_id}"
                )

    def __len__(self) -> int:
        return len(self._by_id)

    def __iter__(self):
        return iter(self.trims())

    def __contains__(self, trim_id: int) -> bool:
        return trim_id in self._by_id

    def get(self, trim_id: int) -> TrimPrimitive:
        try:
            return self._by_id[trim_id]
        except KeyError:
            raise KeyError(f"no trim with id {trim_id}") from None

    def ids(self) -> list[int]:
        return sorted(self._by_id)

    def trims(self) -> list[TrimPrimitive]:
        return [self._by_id[i] for i in self.ids()]

    @property
    def has_rest(self) -> bool:
        return REST_ID in self._by_id and self._by_id[REST_ID].is_rest

    def to_json(self) -> str:
        entries = [
            {"id": t.trim_id, "u1": t.u.u1, "u2": t.u.u2, "name": t.name}
            for t in self.trims()
        ]
        return json.dumps({"trims": entries}, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "TrimLibrary":
        try:
            data = json.loads(text)
            entries = data["trims"]
            trims = [
                TrimPrimitive(
                    int(e["id"]),
                    ControlValue(float(e["u1"]), float(e["u2"])),
                    str(e.get("name", "")),
                )
                for e in entries
            ]
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as err:
            raise ValueError(f"malformed trim library: {err}") from err
        return cls(trims)


def default_library() -> TrimLibrary:
    """Five-trim demonstration library (rest, straight, arcs, turn)."""
    return TrimLibrary(
        [
            TrimPrimitive(1, ControlValue(0.0, 0.0), "rest"),
            TrimPrimitive(2, ControlValue(1.5, 0.0), "move straight"),
            TrimPrimitive(3, ControlValue(-0.25, -1.0), "circle clockwise"),
            TrimPrimitive(4, ControlValue(-0.25, 1.0), "circle anti-clockwise"),
            TrimPrimitive(5, ControlValue(0.0, 1.0), "turn on the spot"),
        ]
    )


@dataclass(frozen=True)
class TrimPlan:
    """Sequence of (trim, duration) segments executed back to back."""

    segments: tuple[tuple[TrimPrimitive, float], ...]

    def __post_init__(self) -> None:
        for _, tau in self.segments:
            if not math.isfinite(tau) or tau < 0.0:
                raise ValueError(f"segment duration must be >= 0, got {tau!r}")

    @classmethod
    def from_ids(cls, lib: TrimLibrary, pairs: Iterable[tuple[int, float]]) -> "TrimPlan":
        return cls(tuple((lib.get(i), float(tau)) for i, tau in pairs))

    @property
    def duration(self) -> float:
        return sum(tau for _, tau in self.segments)

    def ids(self) -> tuple[int, ...]:
        return tuple(t.trim_id for t, _ in self.segments)

    def as_control(self) -> PiecewiseControl:
        return PiecewiseControl(tuple((t.u, tau) for t, tau in self.segments))

    def canonical(self) -> "TrimPlan":
        """Merge adjacent equal trims and drop zero-duration segments.

        A zero-duration trailing rest survives so that an all-rest plan
        does not canonicalize to the empty plan.
        """
        merged: list[tuple[TrimPrimitive, float]] = []
        for trim, tau in self.segments:
            if merged and merged[-1][0].trim_id == trim.trim_id:
                merged[-1] = (trim, merged[-1][1] + tau)
            else:
                merged.append((trim, tau))
        out = [(t, tau) for t, tau in merged if tau > 0.0]
        if not out and merged and merged[-1][0].is_rest:
            out = [merged[-1]]
        return TrimPlan(tuple(out))

    def strip_trailing_rest(self) -> "TrimPlan":
        segs = list(self.canonical().segments)
        while segs and segs[-1][0].is_rest:
            segs.pop()
        return TrimPlan(tuple(segs))

    def tail_after(self, t: float) -> "TrimPlan":
        """Remaining plan once the first t seconds have been executed."""
        if t < 0.0:
            raise ValueError(f"time must be >= 0, got {t!r}")
        out: list[tuple[TrimPrimitive, float]] = []
        remaining = t
        for trim, tau in self.segments:
            if remaining >= tau:
                remaining -= tau
            else:
                out.append((trim, tau - remaining))
                remaining = 0.0
        return TrimPlan(tuple(out))


@dataclass(frozen=True)
class PlanTrajectory:
    """Closed-form trajectory of a plan from a fixed initial state."""

    x0: State
    plan: TrimPlan
    breakpoints: tuple[tuple[float, State], ...]  # segment boundary times/states

    @property
    def endpoint(self) -> State:
        return self.breakpoints[-1][1]

    @property
    def duration(self) -> float:
        return self.breakpoints[-1][0]

    def state(self, t: float) -> State:
        from .robot import flow_const

        if t < 0.0 or t > self.duration + 1e-9:
            raise ValueError(f"time {t!r} outside [0, {self.duration!r}]")
        segs = self.plan.segments
        for k in range(len(segs)):
            t_start, x_start = self.breakpoints[k]
            t_end = self.breakpoints[k + 1][0]
            if t <= t_end or k == len(segs) - 1:
                return flow_const(x_start, segs[k][0].u, min(t, t_end) - t_start)
        return self.x0

    def sample(self, dt: float) -> list[tuple[float, State, ControlValue]]:
        """Sample at spacing <= dt including all breakpoints and the endpoint."""
        if dt <= 0.0:
            raise ValueError(f"dt must be > 0, got {dt!r}")
        from .robot import flow_const

        rest = ControlValue(0.0, 0.0)
        out: list[tuple[float, State, ControlValue]] = []
        segs = self.plan.segments
        if not segs:
            return [(0.0, self.x0, rest)]
        for k, (trim, tau) in enumerate(segs):
            t_start, x_start = self.breakpoints[k]
            n = max(1, math.ceil(tau / dt)) if tau > 0.0 else 0
            for j in range(n):
                s = tau * j / n
                out.append((t_start + s, flow_const(x_start, trim.u, s), trim.u))
        out.append((self.duration, self.endpoint, segs[-1][0].u))
        return out


def plan_flow(x0: State, plan: TrimPlan) -> PlanTrajectory:
    """Evaluate a plan's trajectory by chaining group orbits.

    Each segment advances the state by act(exp(xi_from(u, x), tau), x),
    which equals the closed-form flow of the constant control.
    """
    breakpoints = [(0.0, x0)]
    t = 0.0
    x = x0
    for trim, tau in plan.segments:
        x = act(exp(xi_from(trim.u.as_tuple(), x), tau), x)
        t += tau
        breakpoints.append((t, x))
    return PlanTrajectory(x0, plan, tuple(breakpoints))


def unit_cost(trim: TrimPrimitive, x0: State, cost: "StageCost") -> float:
    """Running cost of one time unit of the trim, anchored at x0.

    State independence of the stage-cost family makes this a property of
    the trim alone; the anchor argument documents the invariance.
    """
    return cost.rate(x0, trim.u)


def plan_cost(plan: TrimPlan, x0: State, cost: "StageCost") -> float:
    """Integral of the stage cost along the plan."""
    return sum(tau * cost.rate(x0, trim.u) for trim, tau in plan.segments)
