"""Figure builders over the CLI's CSV frames.

All builders are pure readers: they parse the input, draw, and write
the output image; nothing is mutated and reruns overwrite the output
with identical bytes (fixed figure sizes, fixed hash salt, no dates in
SVG metadata).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "trim-mpc-plots"

import matplotlib.pyplot as plt
import numpy as np

from .readers import TRACE_COLUMNS, Frame, SchemaError, read_frame

MAX_ARROWS = 25
FIGSIZE = (7.0, 5.0)
KINDS = ("path", "controls", "value-decrease", "mpc-overview")
IMAGE_SUFFIXES = (".png", ".svg")


@dataclass(frozen=True)
class FigureSpec:
    """One figure request: input CSV, kind, output image, title.

    decrease_rate is the per-step value-decrease bound to overlay on a
    value-decrease figure (ignored by the other kinds).
    """

    csv_path: Path
    kind: str
    out_path: Path
    title: str = ""
    decrease_rate: Optional[float] = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}; expected one of {KINDS}")
        if Path(self.out_path).suffix not in IMAGE_SUFFIXES:
            raise ValueError(
                f"output must end in one of {IMAGE_SUFFIXES}, got {self.out_path!r}"
            )
        if self.decrease_rate is not None and self.decrease_rate <= 0.0:
            raise ValueError(f"decrease rate must be > 0, got {self.decrease_rate!r}")


def arrow_stride(n: int) -> int:
    """Sampling stride that keeps at most MAX_ARROWS heading arrows."""
    return max(1, math.ceil(n / MAX_ARROWS))


def _save(fig, out_path: str | Path) -> Path:
    out_path = Path(out_path)
    # Dropping the date keeps SVG bytes identical across reruns.
    meta = {"Date": None} if out_path.suffix == ".svg" else None
    fig.savefig(out_path, metadata=meta)
    plt.close(fig)
    return out_path


def _draw_path(ax, frame: Frame) -> None:
    x1, x2, x3 = frame["x1"], frame["x2"], frame["x3"]
    ax.plot(x1, x2, color="tab:blue", lw=1.5, zorder=1)
    k = arrow_stride(len(x1))
    ax.quiver(
        x1[::k], x2[::k], np.cos(x3[::k]), np.sin(x3[::k]),
        color="dimgray", width=3e-3, scale=30.0, zorder=2,
    )
    if frame.has("replanned"):
        hits = frame["replanned"] > 0.5
        if hits.any():
            ax.scatter(
                x1[hits], x2[hits], marker="s", s=42, facecolors="none",
                edgecolors="tab:orange", label="replanned", zorder=3,
            )
    ax.scatter([x1[0]], [x2[0]], marker="o", color="tab:green", label="start", zorder=3)
    ax.scatter([x1[-1]], [x2[-1]], marker="*", s=130, color="tab:red", label="goal", zorder=3)
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")
    ax.set_aspect("equal", adjustable="datalim")
    ax.grid(True, alpha=0.3)
    ax.legend(loc="best")


def _draw_controls(ax, frame: Frame) -> None:
    t = frame["t"]
    ax.step(t, frame["u1"], where="post", color="tab:blue", label="u1")
    ax.step(t, frame["u2"], where="post", color="tab:red", label="u2")
    ax.set_xlabel("t")
    ax.set_ylabel("control")
    ax.grid(True, alpha=0.3)
    ax.legend(loc="best")


def _draw_value(ax, frame: Frame, decrease_rate: Optional[float] = None) -> None:
    t, value, cost = frame["t"], frame["V"], frame["cost"]
    ax.step(t, value, where="post", color="tab:blue", label="V")
    ax.step(t, cost, where="post", color="tab:red", label="cumulative cost")
    if decrease_rate is not None:
        bound = np.maximum(value[0] - decrease_rate * np.arange(len(t)), 0.0)
        ax.step(
            t, bound, where="post", color="black", ls="--",
            label=f"V(0) - {decrease_rate:g}/step",
        )
    ax.set_xlabel("t")
    ax.grid(True, alpha=0.3)
    ax.legend(loc="best")


def plot_path(csv_path: str | Path, out_path: str | Path, title: str = "") -> Path:
    """xy curve with sparse heading arrows, start/goal markers, and
    replanning markers when the input is a closed-loop trace."""
    frame = read_frame(csv_path)
    fig, ax = plt.subplots(figsize=FIGSIZE)
    _draw_path(ax, frame)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    return _save(fig, out_path)


def plot_controls(csv_path: str | Path, out_path: str | Path, title: str = "") -> Path:
    """Piecewise-constant control components against time."""
    frame = read_frame(csv_path)
    fig, ax = plt.subplots(figsize=FIGSIZE)
    _draw_controls(ax, frame)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    return _save(fig, out_path)


def plot_value_decrease(
    csv_path: str | Path,
    out_path: str | Path,
    title: str = "",
    decrease_rate: Optional[float] = None,
) -> Path:
    """Step plot of the optimal value and the cumulative closed-loop
    cost; pass decrease_rate to overlay the per-step decrease bound."""
    frame = read_frame(csv_path)
    if not frame.has("V", "cost"):
        raise SchemaError(
            f"{csv_path}: the value plot needs the V and cost columns of a "
            "closed-loop trace"
        )
    fig, ax = plt.subplots(figsize=FIGSIZE)
    _draw_value(ax, frame, decrease_rate)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    return _save(fig, out_path)


def plot_mpc_overview(csv_path: str | Path, out_path: str | Path, title: str = "") -> Path:
    """Path, value/cost, and controls of one closed-loop trace side by side."""
    frame = read_frame(csv_path)
    if frame.columns != TRACE_COLUMNS:
        raise SchemaError(
            f"{csv_path}: the overview needs the full closed-loop trace columns"
        )
    fig = plt.figure(figsize=(11.0, 5.0))
    ax_path = fig.add_subplot(1, 2, 1)
    ax_value = fig.add_subplot(2, 2, 2)
    ax_controls = fig.add_subplot(2, 2, 4)
    _draw_path(ax_path, frame)
    _draw_value(ax_value, frame)
    _draw_controls(ax_controls, frame)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    return _save(fig, out_path)


def render(spec: FigureSpec) -> Path:
    """Dispatch one figure request."""
    if spec.kind == "path":
        return plot_path(spec.csv_path, spec.out_path, spec.title)
    if spec.kind == "controls":
        return plot_controls(spec.csv_path, spec.out_path, spec.title)
    if spec.kind == "value-decrease":
        return plot_value_decrease(
            spec.csv_path, spec.out_path, spec.title, spec.decrease_rate
        )
    return plot_mpc_overview(spec.csv_path, spec.out_path, spec.title)
