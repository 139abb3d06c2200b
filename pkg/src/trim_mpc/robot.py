"""Kinematic unicycle: vector field, closed-form flows, and an RK4 cross-check.

Dynamics: x' = (u1 cos x3, u1 sin x3, u2).  Constant controls integrate
in closed form; piecewise-constant controls concatenate those flows.
The RK4 integrator exists to validate the closed forms, not to drive
them, so the two code paths stay independent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .symmetry import GroupElement, OMEGA_EPS, State, act, _require_finite


@dataclass(frozen=True)
class ControlValue:
    """Constant control (u1, u2): forward speed and turn rate."""

    u1: float
    u2: float

    def __post_init__(self) -> None:
        _require_finite("control", self.u1, self.u2)

    def as_tuple(self) -> tuple[float, float]:
        return (self.u1, self.u2)


@dataclass(frozen=True)
class PiecewiseControl:
    """Right-continuous piecewise-constant control on [0, duration)."""

    segments: tuple[tuple[ControlValue, float], ...]

    def __post_init__(self) -> None:
        for u, tau in self.segments:
            if not math.isfinite(tau) or tau < 0.0:
                raise ValueError(f"segment duration must be >= 0, got {tau!r}")

    @property
    def duration(self) -> float:
        return sum(tau for _, tau in self.segments)

    def at(self, t: float) -> ControlValue:
        """Control value at time t; the last segment's value is held at the end."""
        if t < 0.0:
            raise ValueError(f"time must be >= 0, got {t!r}")
        acc = 0.0
        for u, tau in self.segments:
            acc += tau
            if t < acc:
                return u
        if not self.segments:
            raise ValueError("empty control")
        return self.segments[-1][0]


def vector_field(x: State, u: ControlValue) -> tuple[float, float, float]:
    return (u.u1 * math.cos(x.x3), u.u1 * math.sin(x.x3), u.u2)


def flow_const_raw(
    x1: float, x2: float, x3: float, u1: float, u2: float, t: float
) -> tuple[float, float, float]:
    """flow_const on raw floats; the hot path for planners and solvers."""
    if abs(u2) < OMEGA_EPS:
        c = math.cos(x3)
        s = math.sin(x3)
        half = 0.5 * u1 * u2 * t * t
        return (x1 + u1 * t * c - half * s, x2 + u1 * t * s + half * c, x3 + t * u2)
    a = t * u2
    r = u1 / u2
    # sin(x3+a) - sin(x3) = 2 cos(x3 + a/2) sin(a/2), likewise for cos
    half_sin = math.sin(0.5 * a)
    mid = x3 + 0.5 * a
    return (
        x1 + r * 2.0 * math.cos(mid) * half_sin,
        x2 + r * 2.0 * math.sin(mid) * half_sin,
        x3 + a,
    )


def flow_const(x0: State, u: ControlValue, t: float) -> State:
    """Flow of the constant control u from x0 for time t, in closed form.

    For u2 != 0 the position moves along a circle of radius |u1/u2|:

        x1(t) = x1 + (u1/u2) (sin(x3 + t u2) - sin x3)
        x2(t) = x2 + (u1/u2) (cos x3 - cos(x3 + t u2))
        x3(t) = x3 + t u2

    evaluated via product forms of the trig differences.  |u2| below
    OMEGA_EPS uses the straight-line series, mirroring symmetry.exp.
    """
    _require_finite("time", t)
    return State(*flow_const_raw(x0.x1, x0.x2, x0.x3, u.u1, u.u2, t))


def flow_piecewise(x0: State, u: PiecewiseControl, t: float) -> State:
    """Chain flow_const over the segments of u up to time t."""
    if t < 0.0:
        raise ValueError(f"time must be >= 0, got {t!r}")
    x = x0
    remaining = t
    for uk, tau in u.segments:
        if remaining <= tau:
            return flow_const(x, uk, remaining)
        x = flow_const(x, uk, tau)
        remaining -= tau
    if remaining > 1e-12 * max(1.0, t):
        raise ValueError(f"time {t!r} exceeds control duration {u.duration!r}")
    return x


def _rk4_segment(x: State, u: ControlValue, tau: float, step: float) -> list[tuple[float, State]]:
    n = max(1, math.ceil(tau / step))
    h = tau / n
    out = []
    t = 0.0
    for _ in range(n):
        k1 = vector_field(x, u)
        x2 = State(x.x1 + 0.5 * h * k1[0], x.x2 + 0.5 * h * k1[1], x.x3 + 0.5 * h * k1[2])
        k2 = vector_field(x2, u)
        x3 = State(x.x1 + 0.5 * h * k2[0], x.x2 + 0.5 * h * k2[1], x.x3 + 0.5 * h * k2[2])
        k3 = vector_field(x3, u)
        x4 = State(x.x1 + h * k3[0], x.x2 + h * k3[1], x.x3 + h * k3[2])
        k4 = vector_field(x4, u)
        x = State(
            x.x1 + h * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]) / 6.0,
            x.x2 + h * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]) / 6.0,
            x.x3 + h * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]) / 6.0,
        )
        t += h
        out.append((t, x))
    return out


def integrate(x0: State, u: PiecewiseControl, step: float = 1e-3) -> list[tuple[float, State]]:
    """RK4 integration of the piecewise-constant control.

    Substeps never exceed `step` and are aligned with segment boundaries,
    so every switching instant and the endpoint appear exactly in the
    returned (t, state) samples.
    """
    if step <= 0.0:
        raise ValueError(f"step must be > 0, got {step!r}")
    samples = [(0.0, x0)]
    t0 = 0.0
    x = x0
    for uk, tau in u.segments:
        if tau == 0.0:
            continue
        for dt, xs in _rk4_segment(x, uk, tau, step):
            samples.append((t0 + dt, xs))
        t0 += tau
        x = samples[-1][1]
    return samples


def equivariance_residual(g: GroupElement, x0: State, u: PiecewiseControl, t: float) -> float:
    """|flow(t; act(g, x0)) - act(g, flow(t; x0))| for the closed-form flow.

    Zero (to rounding) for every group element; the quantity exists so
    tests can show the invariance breaks for maps outside the group.
    """
    a = flow_piecewise(act(g, x0), u, t)
    b = act(g, flow_piecewise(x0, u, t))
    return math.sqrt((a.x1 - b.x1) ** 2 + (a.x2 - b.x2) ** 2 + (a.x3 - b.x3) ** 2)
