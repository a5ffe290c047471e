"""Command line entry point: ``sgd-plot <kind> <csv...> -o <file>``."""

from __future__ import annotations

import argparse
import sys

from .figures import KINDS, render
from .reader import PlotError


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sgd-plot",
        description="Render a figure from experiment CSV files.",
    )
    parser.add_argument("kind", choices=KINDS, help="figure kind")
    parser.add_argument("csv", nargs="+", help="input CSV file(s)")
    parser.add_argument("-o", "--out", required=True, help="output image path")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        info = render(args.kind, args.csv, args.out)
    except (PlotError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    extras = ""
    if "slope" in info:
        extras = f" (slope {info['slope']:.4f})"
    print(f"wrote {args.out}{extras}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
