#!/usr/bin/env python3
"""Policy comparison across ego speeds on the default freeway loop.

Writes comparison.csv plus SVG charts and prints one line per speed.
"""
import argparse
import logging
from pathlib import Path

from aoiagg.cli import parse_list, run_timestamp
from aoiagg.harness import emit_plots, sweep
from aoiagg.scenario import POLICIES, default_scenario, parse_scenario


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scenario", help="scenario file (default: built-in freeway loop)")
    ap.add_argument("--speeds", default="15,20,25,30")
    ap.add_argument("--seeds", default="1..3")
    ap.add_argument("--duration-ms", type=float, default=300_000.0)
    ap.add_argument("--out", default="out/sweep")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    sc = parse_scenario(args.scenario) if args.scenario else default_scenario()
    sc = sc.with_(duration_ms=args.duration_ms)
    out = Path(args.out)
    table, reports = sweep(sc, parse_list(args.speeds), list(POLICIES), parse_list(args.seeds, int),
                           out_dir=out, when=run_timestamp())
    for bucket in table.buckets:
        cells = "  ".join(f"{p} {table.dssr(bucket, p):5.1f}% {table.latency(bucket, p):4.0f} ms"
                          for p in table.policies)
        print(f"{bucket:4g} m/s  {cells}")
    pred = [r for r in reports if r.policy == "predictive"]
    share = sum(r.mean_sequencing for r in pred) / sum(r.mean_latency for r in pred)
    print(f"predictive: sequencing is {100 * share:.1f}% of latency")
    for path in emit_plots(out):
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
