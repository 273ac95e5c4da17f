#!/usr/bin/env python3
"""Build the cross-benchmark report from the shipped fixture tables.

Aggregates every benchmark CSV into per-model mean ranks, runs the paired
significance tests against the leader, and draws the mean-rank chart.
"""

from __future__ import annotations

import argparse
import csv
from pathlib import Path

from shazam.reporting import render_benchmark_report


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument(
        "benchmarks", nargs="?", type=Path,
        default=Path(__file__).resolve().parent.parent / "fixtures" / "benchmarks",
    )
    parser.add_argument("--out", type=Path, default=Path("runs/report"))
    parser.add_argument("--no-plots", action="store_true")
    args = parser.parse_args()

    paths = render_benchmark_report(args.benchmarks, args.out, make_plots=not args.no_plots)

    with open(paths.ranks, newline="") as f:
        rows = list(csv.reader(f))[1:]
    print(f"mean ranks over {rows[0][3]} tasks:")
    for model, mean_rank, first_places, _ in rows:
        print(f"  {model:<16} {float(mean_rank):.3f}  (first on {first_places})")

    with open(paths.wilcoxon, newline="") as f:
        wrows = list(csv.DictReader(f))
    if wrows:
        print("paired tests against the leader:")
        for row in wrows:
            print(
                f"  {row['scope']:<16} {row['model_a']} vs {row['model_b']:<16} "
                f"p={float(row['p_value']):.4g} (n={row['n']})"
            )
    print(f"report written to {args.out}/")


if __name__ == "__main__":
    main()
