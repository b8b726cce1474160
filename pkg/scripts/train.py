#!/usr/bin/env python3
"""Generate a training trace and save one predictor per node kind."""
import argparse
import logging

from aoiagg.harness import train_pipeline
from aoiagg.predictor.model import MODEL_KINDS
from aoiagg.scenario import default_scenario, parse_scenario


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scenario")
    ap.add_argument("--model", choices=MODEL_KINDS, default="forest")
    ap.add_argument("--out", default="out/models")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    sc = parse_scenario(args.scenario) if args.scenario else default_scenario()
    _, reports = train_pipeline(sc, args.model, out_dir=args.out)
    for r in reports:
        print(f"{r.node_kind}: {r.n_train}/{r.n_test} examples, MAE {r.evaluation.mae_ms:.1f} ms, "
              f"fit {r.fit_seconds:.1f} s -> {r.model_path}")


if __name__ == "__main__":
    main()
