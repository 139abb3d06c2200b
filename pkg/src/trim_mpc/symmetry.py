"""Symmetry group of the unicycle and its one-parameter subgroups.

The state space is M = R^2 x S1 with state x = (x1, x2, x3), heading x3.
The symmetry group acts by rotating and translating the plane while
shifting the heading by the same rotation angle:

    Psi(g, x) = (R(dtheta) @ (x1, x2) + (dx1, dx2), x3 + dx3),

with dtheta = dx3.  Group elements are stored in that redundant form so
that the 4x4 homogeneous materialization stays explicit.  All angles are
plain floats in radians; headings are kept unwrapped and only compared
modulo 2*pi.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

# Below this |omega| the exp/flow ratios sin(wt)/w, (1-cos(wt))/w switch
# to their second-order series; keeps both branches accurate to ~1e-14.
OMEGA_EPS = 1e-8

TWO_PI = 2.0 * math.pi


def wrap_angle(a: float) -> float:
    """Reduce an angle to the interval (-pi, pi]."""
    r = math.fmod(a, TWO_PI)
    if r <= -math.pi:
        r += TWO_PI
    elif r > math.pi:
        r -= TWO_PI
    return r


def _require_finite(name: str, *values: float) -> None:
    for v in values:
        if not math.isfinite(v):
            raise ValueError(f"{name} must be finite, got {v!r}")


@dataclass(frozen=True)
class State:
    """Point (x1, x2, x3) on R^2 x S1."""

    x1: float
    x2: float
    x3: float

    def __post_init__(self) -> None:
        _require_finite("state", self.x1, self.x2, self.x3)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.x1, self.x2, self.x3)


@dataclass(frozen=True)
class GroupElement:
    """Element (dtheta, dx1, dx2, dx3) with dtheta == dx3 enforced."""

    dtheta: float
    dx1: float
    dx2: float
    dx3: float

    def __post_init__(self) -> None:
        _require_finite("group element", self.dtheta, self.dx1, self.dx2, self.dx3)
        if self.dtheta != self.dx3:
            raise ValueError(
                f"rotation angle and heading shift must coincide, "
                f"got dtheta={self.dtheta!r}, dx3={self.dx3!r}"
            )

    @classmethod
    def from_shift(cls, dx1: float, dx2: float, dx3: float) -> "GroupElement":
        return cls(dx3, dx1, dx2, dx3)


@dataclass(frozen=True)
class AlgebraElement:
    """Generator (v1, v2, omega); exp(xi, t) is its one-parameter subgroup."""

    v1: float
    v2: float
    omega: float

    def __post_init__(self) -> None:
        _require_finite("algebra element", self.v1, self.v2, self.omega)


def identity() -> GroupElement:
    return GroupElement(0.0, 0.0, 0.0, 0.0)


def act(g: GroupElement, x: State) -> State:
    """Apply Psi(g, .) to a state."""
    c = math.cos(g.dtheta)
    s = math.sin(g.dtheta)
    return State(
        c * x.x1 - s * x.x2 + g.dx1,
        s * x.x1 + c * x.x2 + g.dx2,
        x.x3 + g.dx3,
    )


def compose(g: GroupElement, h: GroupElement) -> GroupElement:
    """Return the element with act(compose(g, h), x) == act(g, act(h, x))."""
    c = math.cos(g.dtheta)
    s = math.sin(g.dtheta)
    ang = g.dtheta + h.dtheta
    return GroupElement(
        ang,
        c * h.dx1 - s * h.dx2 + g.dx1,
        s * h.dx1 + c * h.dx2 + g.dx2,
        ang,
    )


def inverse(g: GroupElement) -> GroupElement:
    c = math.cos(g.dtheta)
    s = math.sin(g.dtheta)
    # R(-dtheta) @ -(dx1, dx2)
    return GroupElement(
        -g.dtheta,
        -(c * g.dx1 + s * g.dx2),
        -(-s * g.dx1 + c * g.dx2),
        -g.dx3,
    )


def to_matrix(g: GroupElement) -> list[list[float]]:
    """Homogeneous 4x4 matrix acting on (x1, x2, x3, 1)."""
    c = math.cos(g.dtheta)
    s = math.sin(g.dtheta)
    return [
        [c, -s, 0.0, g.dx1],
        [s, c, 0.0, g.dx2],
        [0.0, 0.0, 1.0, g.dx3],
        [0.0, 0.0, 0.0, 1.0],
    ]


def exp(xi: AlgebraElement, t: float) -> GroupElement:
    """Evaluate the one-parameter subgroup generated by xi at time t.

    For omega != 0 the rotation angle is omega*t and the translation is

        b = ( (v1 sin(wt) - v2 (1 - cos(wt))) / w,
              (v1 (1 - cos(wt)) + v2 sin(wt)) / w ),

    with 1 - cos(wt) evaluated as 2 sin^2(wt/2) to avoid cancellation.
    Below OMEGA_EPS the translation uses the series
    b = (v1 t - v2 w t^2 / 2, v2 t + v1 w t^2 / 2).
    """
    _require_finite("time", t)
    v1, v2, w = xi.v1, xi.v2, xi.omega
    ang = w * t
    if abs(w) < OMEGA_EPS:
        half = 0.5 * w * t * t
        b1 = v1 * t - v2 * half
        b2 = v2 * t + v1 * half
    else:
        s = math.sin(ang)
        vers = 2.0 * math.sin(0.5 * ang) ** 2
        b1 = (v1 * s - v2 * vers) / w
        b2 = (v1 * vers + v2 * s) / w
    return GroupElement(ang, b1, b2, ang)


def xi_from(u: tuple[float, float], x0: State) -> AlgebraElement:
    """Generator whose subgroup orbit through x0 is the constant-u motion.

    Satisfies act(exp(xi_from(u, x0), t), x0) == flow of u from x0 for
    all t; see robot.flow_const for the closed-form flow.
    """
    u1, u2 = u
    _require_finite("control", u1, u2)
    return AlgebraElement(
        u1 * math.cos(x0.x3) + u2 * x0.x2,
        u1 * math.sin(x0.x3) - u2 * x0.x1,
        u2,
    )
