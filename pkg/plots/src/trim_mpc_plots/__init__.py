"""Offline figures from trim-mpc CSV outputs."""

from .figures import (
    FIGSIZE,
    KINDS,
    MAX_ARROWS,
    FigureSpec,
    arrow_stride,
    plot_controls,
    plot_mpc_overview,
    plot_path,
    plot_value_decrease,
    render,
)
from .readers import (
    KNOWN_HEADERS,
    TRACE_COLUMNS,
    TRAJECTORY_COLUMNS,
    TRANSCRIPTION_COLUMNS,
    Frame,
    SchemaError,
    read_frame,
)

__version__ = "0.1.0"

__all__ = [
    "FIGSIZE",
    "KINDS",
    "KNOWN_HEADERS",
    "MAX_ARROWS",
    "TRACE_COLUMNS",
    "TRAJECTORY_COLUMNS",
    "TRANSCRIPTION_COLUMNS",
    "FigureSpec",
    "Frame",
    "SchemaError",
    "arrow_stride",
    "plot_controls",
    "plot_mpc_overview",
    "plot_path",
    "plot_value_decrease",
    "read_frame",
    "render",
    "__version__",
]
