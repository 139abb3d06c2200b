"""Entry point: plot <kind> <csv> -o <png/svg>."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

from .figures import KINDS, FigureSpec, render
from .readers import SchemaError

EXIT_OK = 0
EXIT_INPUT = 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plot",
        description="Render one figure from a trim-mpc CSV output file.",
    )
    parser.add_argument("kind", choices=KINDS, help="figure kind")
    parser.add_argument("csv", help="input CSV (a trim-mpc output)")
    parser.add_argument(
        "-o", "--output", required=True, help="output image (.png or .svg)"
    )
    parser.add_argument("--title", default="", help="figure title")
    parser.add_argument(
        "--decrease-rate",
        type=float,
        default=None,
        help="per-step decrease bound to overlay (value-decrease only)",
    )
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        spec = FigureSpec(
            csv_path=Path(args.csv),
            kind=args.kind,
            out_path=Path(args.output),
            title=args.title,
            decrease_rate=args.decrease_rate,
        )
        out = render(spec)
    except (SchemaError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    print(f"wrote {out}")
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
