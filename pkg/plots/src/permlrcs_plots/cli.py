"""Command line entry: render harness CSVs to PNG figures."""

import argparse
import sys

from .render import plot_phase, plot_runtime
from .tables import PlotsError


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plot",
        description="Render phase-grid heatmaps and error-vs-time curves "
                    "from permlrcs harness CSV files.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phase", help="heatmap of per-cell success fractions")
    p.add_argument("csv", help="phase.csv written by the harness")
    p.add_argument("--out", required=True, help="output PNG path")

    p = sub.add_parser("runtime", help="per-algorithm error vs cumulative time")
    p.add_argument("csv", help="bench.csv written by the harness")
    p.add_argument("--out", required=True, help="output PNG path")

    return parser


def main(argv=None) -> int:
    ns = make_parser().parse_args(argv)
    try:
        if ns.command == "phase":
            out = plot_phase(ns.csv, ns.out)
        else:
            out = plot_runtime(ns.csv, ns.out)
    except (PlotsError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
