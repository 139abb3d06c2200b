"""Readers for the solver CLI's CSV outputs.

The figures consume the CLI's files as-is, so the three documented
headers are the whole input contract.  Anything else is rejected up
front: a wrong or truncated file should fail loudly, not produce a
silently wrong figure.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

TRAJECTORY_COLUMNS = ("t", "x1", "x2", "x3", "u1", "u2")
TRACE_COLUMNS = ("t", "x1", "x2", "x3", "u1", "u2", "V", "cost", "replanned")
TRANSCRIPTION_COLUMNS = ("t", "x1", "x2", "x3", "x4", "x5", "u1", "u2")
KNOWN_HEADERS = (TRACE_COLUMNS, TRAJECTORY_COLUMNS, TRANSCRIPTION_COLUMNS)


class SchemaError(ValueError):
    """The input does not match any documented CSV schema."""


@dataclass(frozen=True)
class Frame:
    """Parsed CSV: one float column per header name."""

    path: Path
    columns: tuple[str, ...]
    data: np.ndarray  # (rows, len(columns))

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self.data[:, self.columns.index(name)]
        except ValueError:
            raise KeyError(name) from None

    def has(self, *names: str) -> bool:
        return all(n in self.columns for n in names)

    @property
    def n_rows(self) -> int:
        return self.data.shape[0]


def read_frame(path: str | Path) -> Frame:
    """Parse and validate one CLI output file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise SchemaError(f"cannot read {path}: {exc}") from exc
    rows = list(csv.reader(text.splitlines()))
    if not rows:
        raise SchemaError(f"{path}: empty file")
    header = tuple(h.strip() for h in rows[0])
    if header not in KNOWN_HEADERS:
        raise SchemaError(
            f"{path}: header {','.join(header)!r} matches none of the "
            "documented CSV headers"
        )
    body = rows[1:]
    if not body:
        raise SchemaError(f"{path}: no data rows")
    data = np.empty((len(body), len(header)))
    for i, row in enumerate(body):
        line = i + 2  # 1-based, after the header
        if len(row) != len(header):
            raise SchemaError(
                f"{path}: line {line} has {len(row)} fields, expected {len(header)}"
            )
        try:
            data[i] = [float(v) for v in row]
        except ValueError:
            raise SchemaError(f"{path}: line {line} is not numeric") from None
        if not np.isfinite(data[i]).all():
            raise SchemaError(f"{path}: line {line} contains a non-finite value")
    if "replanned" in header:
        flags = data[:, header.index("replanned")]
        if not np.isin(flags, (0.0, 1.0)).all():
            raise SchemaError(f"{path}: the replanned column must be 0 or 1")
    return Frame(path=path, columns=header, data=data)
