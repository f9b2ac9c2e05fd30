"""Command line for rendering one figure from a run's data directory."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .figures import RENDERERS
from .io import SchemaMismatch


def positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("window must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plots",
        description="Render a figure from simulation output files.")
    parser.add_argument("kind", choices=sorted(RENDERERS))
    parser.add_argument("--in", dest="in_path", required=True,
                        help="data directory (run, aggregate, or sweep)")
    parser.add_argument("--out", required=True, help="image file to write")
    parser.add_argument("--smooth", type=positive_int, default=100,
                        help="centered moving-average window (default 100)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        RENDERERS[args.kind](Path(args.in_path), Path(args.out), args.smooth)
    except (SchemaMismatch, FileNotFoundError, IsADirectoryError) as exc:
        print(f"plots: {exc}", file=sys.stderr)
        return 2
    return 0


def entrypoint() -> None:
    sys.exit(main())
