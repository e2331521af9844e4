"""Command line entry point for figure rendering."""

from __future__ import annotations

import argparse
import sys

from .figures import METRICS, FigureError, render_figures


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="feedsim-plot")
    parser.add_argument("--in", dest="csv_dir", required=True,
                        help="directory of sweep metrics CSVs")
    parser.add_argument("--out", dest="out_dir", required=True,
                        help="directory for figures and data tables")
    parser.add_argument("--metrics", default=None,
                        help=f"comma-separated subset of {','.join(METRICS)}")
    args = parser.parse_args(argv)
    metrics = args.metrics.split(",") if args.metrics else None
    try:
        written = render_figures(args.csv_dir, args.out_dir, metrics=metrics)
    except FigureError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {len(written)} figure files to {args.out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
