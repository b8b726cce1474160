#!/usr/bin/env python3
"""Train all three predictor kinds on one simulated trace and compare them."""
import argparse
import logging

from aoiagg.harness import generate_trace, train_pipeline
from aoiagg.predictor.model import MODEL_KINDS
from aoiagg.scenario import default_scenario


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--duration-ms", type=float, default=120_000.0)
    ap.add_argument("--epochs", type=int, default=5, help="recurrent training epochs")
    ap.add_argument("--kinds", default=",".join(MODEL_KINDS))
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    sc = default_scenario(duration_ms=args.duration_ms)
    rows = generate_trace(sc)
    print(f"trace: {len(rows)} node-timestamps")
    print(f"{'model':10} {'kind':8} {'h':>3} {'MAE ms':>8} {'within 10%':>11} {'latency ms':>11} {'params':>8}")
    for kind in args.kinds.split(","):
        config = {"epochs": args.epochs} if kind == "recurrent" else None
        _, reports = train_pipeline(sc, kind, rows=rows, config=config)
        for r in reports:
            ev = r.evaluation
            print(f"{kind:10} {r.node_kind:8} {r.horizon:3d} {ev.mae_ms:8.1f} {100 * ev.accuracy:10.1f}% "
                  f"{ev.latency_ms:11.4f} {ev.n_params:8d}")


if __name__ == "__main__":
    main()
