"""`plots <csv> --out <dir>`: figures plus slopes.json from a sweep CSV."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .render import SchemaError, render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="plots", description="Render log-log error-vs-cost figures from a sweep CSV"
    )
    parser.add_argument("csv", type=Path, help="sweep CSV written by the benchmark harness")
    parser.add_argument("--out", type=Path, default=Path("figures"), help="output directory")
    args = parser.parse_args(argv)
    if not args.csv.exists():
        print(f"no such file: {args.csv}", file=sys.stderr)
        return 2
    try:
        payload = render(args.csv, args.out)
    except SchemaError as exc:
        print(f"schema mismatch: {exc}", file=sys.stderr)
        return 2
    for panel in payload["panels"]:
        print(
            f"n_steps={panel['n_steps']}: sl_slope={panel['sl_slope']:.3f} "
            f"ml_slope={panel['ml_slope']:.3f}"
        )
    print(f"wrote {args.out}/slopes.json")
    return 0


if __name__ == "__main__":
    sys.exit(main())
