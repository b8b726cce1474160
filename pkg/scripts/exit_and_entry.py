#!/usr/bin/env python3
"""Replay the two-node speed-change scenario and list its sequencing events."""
import argparse

from aoiagg.harness import reconstruct_exit_and_entry


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    trace = reconstruct_exit_and_entry(seed=args.seed)
    for phase in (trace.slow, trace.fast):
        print(f"ego {phase.speed:g} m/s, cycles {phase.cycles[0]}-{phase.cycles[-1]}, "
              f"mean DSSR {phase.mean_dssr:.1f}%")
        for cycle, node in phase.missing:
            print(f"  cycle {cycle}: {node} missing")
        for issue in phase.issues:
            print(f"  cycle {issue.expected_cycle}: {issue.node_id} delivered cycle {issue.actual_cycle} "
                  f"(offset {issue.offset:+d}, {issue.reason})")


if __name__ == "__main__":
    main()
