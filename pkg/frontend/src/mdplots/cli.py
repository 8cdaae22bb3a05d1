"""plots <kind> --in <dir> --out <file.png> [--dump-series <csv>]

Renders one figure kind from mdlab harness output. Exit 0 on success and 1
on any input/schema problem (the offending file and column/key are named).
"""

from __future__ import annotations

import argparse
import sys

from .figures import KINDS, dump_series, render
from .io import SchemaError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="plots", description=__doc__)
    parser.add_argument("kind", choices=KINDS, help="figure kind to render")
    parser.add_argument("--in", dest="in_path", required=True,
                        help="input directory (or file, for trajectory/phase_passrates)")
    parser.add_argument("--out", required=True, help="output image path (.png)")
    parser.add_argument("--dump-series", default=None,
                        help="also write the plotted data series to this CSV (self-check)")
    parser.add_argument("--title", default="", help="figure title (default: the kind)")
    parser.add_argument("--dpi", type=int, default=150, help="output resolution (default 150)")
    return parser


def run(argv) -> int:
    args = build_parser().parse_args(argv)
    try:
        series = render(args.kind, args.in_path, args.out, title=args.title, dpi=args.dpi)
        if args.dump_series:
            dump_series(series, args.dump_series)
    except (SchemaError, FileNotFoundError, NotADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {args.out} ({len(series)} series points)")
    return 0


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
