"""`plot <run-dir> --kind rate|density|delta|losses --out FILE.{svg,png}`"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .render import KINDS, FigureSpec, SchemaError, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="plot", description=__doc__)
    parser.add_argument("run_dir", help="run directory produced by the lplaw CLI")
    parser.add_argument("--kind", required=True, choices=KINDS)
    parser.add_argument("--out", required=True, help="output image (.svg or .png)")
    parser.add_argument("--title")
    parser.add_argument("--xlabel")
    parser.add_argument("--ylabel")
    return parser


def dispatch(argv: "list[str] | None" = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        out = render(
            FigureSpec(
                run_dir=Path(args.run_dir),
                kind=args.kind,
                out_path=Path(args.out),
                title=args.title,
                xlabel=args.xlabel,
                ylabel=args.ylabel,
            )
        )
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(str(out))
    return 0


def main() -> None:
    raise SystemExit(dispatch())


if __name__ == "__main__":
    main()
