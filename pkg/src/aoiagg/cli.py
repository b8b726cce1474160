"""Command-line entry point: simulate, train, sweep, plot."""
from __future__ import annotations

import argparse
import logging
import os
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import List, Optional

from .harness import emit_plots, run_experiment, sweep, train_pipeline, write_run
from .predictor.model import MODEL_KINDS
from .scenario import POLICIES, Scenario, ScenarioError, default_scenario, parse_scenario

OUTPUT_ENV = "AOIAGG_OUTPUT_ROOT"
log = logging.getLogger("aoiagg")


def output_root(override: Optional[str] = None) -> Path:
    return Path(override or os.environ.get(OUTPUT_ENV, "."))


def run_timestamp() -> datetime:
    """Report timestamp; ``SOURCE_DATE_EPOCH`` pins it for byte-identical reruns."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch:
        return datetime.fromtimestamp(int(epoch), tz=timezone.utc)
    return datetime.now(timezone.utc)


def parse_list(text: str, cast=float) -> List:
    """'15,20,25' or a closed range '1..5'."""
    text = text.strip()
    if ".." in text:
        lo, hi = text.split("..", 1)
        return [cast(v) for v in range(int(lo), int(hi) + 1)]
    values = [cast(v) for v in text.split(",") if v.strip()]
    if not values:
        raise ValueError(f"empty list {text!r}")
    return values


def _scenario(path: Optional[str]) -> Scenario:
    return parse_scenario(path) if path else default_scenario()


def cmd_simulate(args) -> int:
    sc = _scenario(args.scenario)
    policy = args.policy or sc.policy
    seed = sc.seed if args.seed is None else args.seed
    report, result = run_experiment(sc, policy, seed)
    out = output_root(args.out) / sc.output_dir / f"{policy}_seed{seed}"
    write_run(report, result, out, run_timestamp())
    print(f"{policy} seed={seed}: DSSR {report.mean_dssr:.2f}%  latency {report.mean_latency:.1f} ms "
          f"(sequencing {100 * report.sequencing_share:.0f}%)  stream {report.stream_digest}")
    print(f"wrote {out}")
    return 0


def cmd_train(args) -> int:
    sc = _scenario(args.scenario)
    out = output_root(args.out) / sc.output_dir / "models"
    _, reports = train_pipeline(sc, args.model, out_dir=out)
    for r in reports:
        ev = r.evaluation
        print(f"{r.model_kind}/{r.node_kind} h={r.horizon}: rows {r.train_rows}/{r.test_rows}, "
              f"examples {r.n_train}/{r.n_test}, MAE {ev.mae_ms:.1f} ms, "
              f"within 10% {100 * ev.accuracy:.1f}%, latency {ev.latency_ms:.3f} ms, params {ev.n_params}")
        print(f"  saved {r.model_path}")
    return 0


def cmd_sweep(args) -> int:
    sc = _scenario(args.scenario)
    if args.duration_ms:
        sc = sc.with_(duration_ms=args.duration_ms)
    policies = list(POLICIES) if args.policies == "all" else parse_list(args.policies, str)
    speeds = parse_list(args.speeds)
    seeds = parse_list(args.seeds, int)
    out = output_root(args.out) / sc.output_dir / "sweep"
    table, _ = sweep(sc, speeds, policies, seeds, out_dir=out, when=run_timestamp())
    for bucket in table.buckets:
        cells = "  ".join(f"{p}: {table.dssr(bucket, p):.1f}% / {table.latency(bucket, p):.0f} ms"
                          for p in table.policies if (bucket, p) in table.cells)
        print(f"{bucket:g} m/s  {cells}")
    print(f"wrote {out / 'comparison.csv'}")
    return 0


def cmd_plot(args) -> int:
    for path in emit_plots(args.input, args.out):
        print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aoiagg", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one policy on one seed")
    p.add_argument("--scenario")
    p.add_argument("--policy", choices=POLICIES)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help=f"output root (default ${OUTPUT_ENV} or .)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="generate a trace and fit a predictor")
    p.add_argument("--scenario")
    p.add_argument("--model", required=True, choices=MODEL_KINDS)
    p.add_argument("--out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="compare policies across speeds and seeds")
    p.add_argument("--scenario")
    p.add_argument("--speeds", default="15,20,25,30")
    p.add_argument("--policies", default="all")
    p.add_argument("--seeds", default="1..3")
    p.add_argument("--duration-ms", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("plot", help="render SVG charts from a run directory")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ScenarioError, ValueError, FileNotFoundError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
