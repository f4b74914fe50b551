"""Run the full analysis on the bundled synthetic bins and print a table.

    python3 scripts/synthetic_bins.py [data/demo_bins.json] --format csv
"""

import argparse
import sys
from pathlib import Path

from ttqi import emit_report, parse_input, run_analysis

DEFAULT = Path(__file__).resolve().parents[1] / "data" / "demo_bins.json"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("file", nargs="?", default=str(DEFAULT))
    ap.add_argument("--format", default="table-text", choices=("table-text", "csv", "structured", "plot-data"))
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()

    rows = run_analysis(parse_input(Path(args.file)), threads=args.threads)
    sys.stdout.write(emit_report(rows, args.format).decode("utf-8"))


if __name__ == "__main__":
    main()
